#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fab/command.hpp"

namespace fab {

// Line-oriented command-list format, one command per line:
//
//   move_extrude X Y Z [speed=S] [e=E]
//   move_retract X Y Z [speed=S]
//   travel X Y Z [speed=S]
//   set_nozzle_temp C [wait]
//   set_bed_temp C [wait]
//   auto_home
//   set_max_acceleration AX AY AZ [e=AE]
//   set_starting_acceleration A
//   set_jerk JX JY JZ [e=JE]
//   raw <rest of line, verbatim>
//
// Blank lines and lines starting with '#' are ignored. Numbers are written
// in shortest round-trip form.
std::string format_command(const Command& cmd);
std::string to_command_list(std::span<const Command> commands);

// Throws ParseError naming the offending line.
Command parse_command(std::string_view line);
std::vector<Command> parse_command_list(std::string_view text);

}  // namespace fab

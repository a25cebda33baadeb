#pragma once

// The `fab` command-line verbs as library functions. The executable only
// parses flags and forwards here.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fab/printer.hpp"
#include "fab/profile.hpp"
#include "fab/recipes.hpp"
#include "fab/toolpath.hpp"

namespace fab::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConnect = 2,
  kExitStreamFault = 3,
  kExitInvalidProgram = 4,
};

// ---------------------------------------------------------------------------
// Configuration

struct Config {
  std::string device = "virtual";  // serial path or "virtual"
  int baud = 115200;
  std::string profile = "ender3";  // built-in name or profile file
  BoundsMode bounds_mode = BoundsMode::kStrict;
  std::uint16_t port = 8765;  // service port on 127.0.0.1
  friend bool operator==(const Config&, const Config&) = default;
};

// `key = value` lines with keys device, baud, profile, bounds_mode, port;
// `#` starts a comment. Throws ParseError.
Config parse_config(std::string_view text, Config base = {});

using EnvLookup = std::function<const char*(const char*)>;

// FAB_DEVICE, FAB_BAUD, FAB_PROFILE, FAB_BOUNDS_MODE and FAB_PORT override
// the matching keys.
Config apply_env(Config config, const EnvLookup& env);

// Reads `path`, else $FAB_CONFIG, else $HOME/.config/fab/config when it
// exists, then applies the environment.
Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env);

// ---------------------------------------------------------------------------
// Programs

enum class ProgramFormat { kGcode, kCommandList };

// ".cmds" files hold the command-list format; everything else is G-code.
ProgramFormat format_for(const std::filesystem::path& path);

struct Program {
  std::vector<Command> commands;
  std::vector<std::string> lines;  // G-code to send
  std::vector<Segment> segments;
  std::vector<Diagnostic> diagnostics;
};

// Throws ParseError for a malformed command list and ArgumentError for an
// invalid command.
Program load_program(std::string_view text, ProgramFormat format, const MachineProfile& profile);
std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Rendering

struct RenderStats {
  ToolpathStats toolpath;
  std::size_t warnings = 0;  // envelope violations
  double duration = 0.0;     // simulated, s
};

// Top (XY) and side (XZ) orthographic views. Every segment is one <line>
// in each view; extrusions are colored by feedrate, travels are dashed,
// retracts and primes are marked, and violations are ringed in red.
std::string render_svg(const MachineProfile& profile, std::span<const Segment> segments,
                       std::span<const Violation> violations, const RenderStats& stats);

// ---------------------------------------------------------------------------
// Verbs. Each writes its report to `out`, problems to `err`, and returns
// an exit code.

struct RenderOptions {
  std::filesystem::path input;
  std::filesystem::path output;
};
int run_render(const RenderOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err);

struct StreamOptions {
  std::filesystem::path input;
  bool checksum = false;
  double timeout = 10.0;  // per-line acknowledgment timeout, s
  std::optional<std::filesystem::path> wire_log;
  const std::atomic<bool>* interrupt = nullptr;  // set to stop the print
  // Blocks until the operator continues after a pause directive. Without
  // it the stream resumes at once.
  std::function<void()> on_pause;
};
int run_stream(const StreamOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err);

struct SimulateOptions {
  std::filesystem::path input;
  printer::EnvelopeMode envelope = printer::EnvelopeMode::kClamp;
  std::optional<std::filesystem::path> trace;  // JSON-lines trace output
};
int run_simulate(const SimulateOptions& opts, const Config& config, std::ostream& out,
                 std::ostream& err);

struct RecipeOptions {
  std::string name;  // empty lists the catalog
  recipes::ParamMap params;
  ProgramFormat format = ProgramFormat::kGcode;
  std::optional<std::filesystem::path> output;  // default stdout
};
// Parses "key=value" into `params`; throws ArgumentError.
void add_param(recipes::ParamMap& params, std::string_view key_value);
int run_recipe(const RecipeOptions& opts, const Config& config, std::ostream& out,
               std::ostream& err);

struct ServeOptions {
  const std::atomic<bool>* interrupt = nullptr;
  // Called with the bound port once the service accepts clients.
  std::function<void(std::uint16_t)> on_listening;
};
int run_serve(const ServeOptions& opts, const Config& config, std::ostream& out,
              std::ostream& err);

// Reads G-code lines from `in`, sends each and prints the printer's
// replies. "quit" or end of input leaves.
int run_console(std::istream& in, const Config& config, std::ostream& out, std::ostream& err);

}  // namespace fab::cli

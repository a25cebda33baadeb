#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace fab {

// Machine identity, work envelope, nozzle/filament geometry and motion
// defaults. Lengths in mm, speeds in mm/s.
struct MachineProfile {
  std::string name;
  double max_x = 0.0;
  double max_y = 0.0;
  double max_z = 0.0;
  double nozzle_radius = 0.0;
  double filament_radius = 0.0;
  double default_print_speed = 25.0;
  double default_travel_speed = 50.0;
  double retract_length = 2.0;
  double retract_speed = 25.0;

  friend bool operator==(const MachineProfile&, const MachineProfile&) = default;
};

// Throws ProfileError when an invariant does not hold.
void validate(const MachineProfile& profile);

// Creality Ender-3: 220 x 220 x 250 mm, 0.4 mm nozzle, 1.75 mm filament.
MachineProfile ender3();

std::optional<MachineProfile> builtin_profile(std::string_view name);

// Key-value profile format, one `key = value` per line, `#` comments.
// Keys not present keep the value from `base`. The result is validated.
MachineProfile parse_profile(std::string_view text, const MachineProfile& base = ender3());
MachineProfile load_profile(const std::filesystem::path& path);
std::string to_config(const MachineProfile& profile);

// Resolves a built-in profile name or a profile file path.
MachineProfile resolve_profile(std::string_view name_or_path);

}  // namespace fab

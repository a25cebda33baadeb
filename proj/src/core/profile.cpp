#include "fab/profile.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "fab/errors.hpp"
#include "fab/text.hpp"

namespace fab {

namespace {

struct Field {
  std::string_view key;
  double MachineProfile::*member;
};

constexpr Field kFields[] = {
    {"max_x", &MachineProfile::max_x},
    {"max_y", &MachineProfile::max_y},
    {"max_z", &MachineProfile::max_z},
    {"nozzle_radius", &MachineProfile::nozzle_radius},
    {"filament_radius", &MachineProfile::filament_radius},
    {"default_print_speed", &MachineProfile::default_print_speed},
    {"default_travel_speed", &MachineProfile::default_travel_speed},
    {"retract_length", &MachineProfile::retract_length},
    {"retract_speed", &MachineProfile::retract_speed},
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ProfileError("invalid machine profile: " + what);
}

}  // namespace

void validate(const MachineProfile& p) {
  for (const auto& f : kFields) {
    require(std::isfinite(p.*f.member), std::string(f.key) + " is not finite");
  }
  require(p.max_x > 0 && p.max_y > 0 && p.max_z > 0, "envelope dimensions must be > 0");
  require(p.nozzle_radius > 0, "nozzle_radius must be > 0");
  require(p.filament_radius > p.nozzle_radius, "filament_radius must exceed nozzle_radius");
  require(p.default_print_speed > 0, "default_print_speed must be > 0");
  require(p.default_travel_speed > 0, "default_travel_speed must be > 0");
  require(p.retract_speed > 0, "retract_speed must be > 0");
  require(p.retract_length >= 0, "retract_length must be >= 0");
}

MachineProfile ender3() {
  MachineProfile p;
  p.name = "ender3";
  p.max_x = 220.0;
  p.max_y = 220.0;
  p.max_z = 250.0;
  p.nozzle_radius = 0.2;
  p.filament_radius = 0.875;
  return p;
}

std::optional<MachineProfile> builtin_profile(std::string_view name) {
  if (name == "ender3") return ender3();
  return std::nullopt;
}

MachineProfile parse_profile(std::string_view text, const MachineProfile& base) {
  MachineProfile p = base;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = text::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ProfileError("profile line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = text::trim(line.substr(0, eq));
    const auto value = text::trim(line.substr(eq + 1));
    if (key == "name") {
      p.name = std::string(value);
      continue;
    }
    bool known = false;
    for (const auto& f : kFields) {
      if (f.key != key) continue;
      const auto v = text::parse_double(value);
      if (!v) {
        throw ProfileError("profile line " + std::to_string(line_no) + ": bad number for " +
                           std::string(key));
      }
      p.*f.member = *v;
      known = true;
    }
    if (!known) {
      throw ProfileError("profile line " + std::to_string(line_no) + ": unknown key " +
                         std::string(key));
    }
  }
  validate(p);
  return p;
}

MachineProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProfileError("cannot read profile " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_profile(ss.str());
}

std::string to_config(const MachineProfile& p) {
  std::string out = "name = " + p.name + "\n";
  for (const auto& f : kFields) {
    out += std::string(f.key) + " = " + text::format_shortest(p.*f.member) + "\n";
  }
  return out;
}

MachineProfile resolve_profile(std::string_view name_or_path) {
  if (auto p = builtin_profile(name_or_path)) return *p;
  return load_profile(std::filesystem::path(name_or_path));
}

}  // namespace fab

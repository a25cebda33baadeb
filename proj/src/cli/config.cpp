#include <filesystem>
#include <fstream>
#include <sstream>

#include "fab/cli.hpp"
#include "fab/errors.hpp"
#include "fab/text.hpp"

namespace fab::cli {

namespace {

void set_key(Config& c, std::string_view key, std::string_view value, const std::string& where) {
  auto bad = [&](const char* what) {
    throw ParseError(where + ": " + what + " '" + std::string(value) + "'");
  };
  if (key == "device") {
    if (value.empty()) bad("empty device");
    c.device = value;
  } else if (key == "baud") {
    const auto b = text::parse_long(value);
    if (!b || *b <= 0) bad("invalid baud");
    c.baud = static_cast<int>(*b);
  } else if (key == "profile") {
    if (value.empty()) bad("empty profile");
    c.profile = value;
  } else if (key == "bounds_mode") {
    const auto m = parse_bounds_mode(value);
    if (!m) bad("bounds_mode must be strict or permissive, got");
    c.bounds_mode = *m;
  } else if (key == "port") {
    const auto p = text::parse_long(value);
    if (!p || *p < 0 || *p > 65535) bad("invalid port");
    c.port = static_cast<std::uint16_t>(*p);
  } else {
    throw ParseError(where + ": unknown key '" + std::string(key) + "'");
  }
}

}  // namespace

Config parse_config(std::string_view text, Config base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::string_view v = line;
    if (auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
    v = text::trim(v);
    if (v.empty()) continue;
    const auto eq = v.find('=');
    const std::string where = "config line " + std::to_string(n);
    if (eq == std::string_view::npos) throw ParseError(where + ": expected key = value");
    set_key(base, text::trim(v.substr(0, eq)), text::trim(v.substr(eq + 1)), where);
  }
  return base;
}

Config apply_env(Config config, const EnvLookup& env) {
  const std::pair<const char*, const char*> vars[] = {
      {"FAB_DEVICE", "device"},   {"FAB_BAUD", "baud"}, {"FAB_PROFILE", "profile"},
      {"FAB_BOUNDS_MODE", "bounds_mode"}, {"FAB_PORT", "port"},
  };
  for (const auto& [var, key] : vars) {
    if (const char* v = env(var)) set_key(config, key, text::trim(v), var);
  }
  return config;
}

Config load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
  std::optional<std::filesystem::path> file = path;
  if (!file) {
    if (const char* p = env("FAB_CONFIG"); p && *p) {
      file = p;
    } else if (const char* home = env("HOME"); home && *home) {
      std::filesystem::path def = std::filesystem::path(home) / ".config" / "fab" / "config";
      if (std::filesystem::exists(def)) file = def;
    }
  }
  Config c;
  if (file) c = parse_config(read_file(*file));
  return apply_env(c, env);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fab::cli

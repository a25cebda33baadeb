#include <cmath>
#include <cstdio>

#include "fab/gcode.hpp"
#include "fab/text.hpp"

namespace fab::gcode {

namespace {

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

// "T:210.0 /210.0 B:60.0 /60.0 @:0 B@:0", also "T:210.0/210.0".
std::optional<TempReport> parse_temps(std::string_view s) {
  const auto tokens = text::split_ws(s);
  auto pair = [&](std::string_view key, std::optional<double>& actual,
                  std::optional<double>& target) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!starts_with(tokens[i], key)) continue;
      auto v = tokens[i].substr(key.size());
      const auto slash = v.find('/');
      actual = text::parse_double(v.substr(0, slash));
      if (slash != std::string_view::npos) {
        target = text::parse_double(v.substr(slash + 1));
      } else if (i + 1 < tokens.size() && starts_with(tokens[i + 1], "/")) {
        target = text::parse_double(tokens[i + 1].substr(1));
      }
      return;
    }
  };
  std::optional<double> ta, tt, ba, bt;
  pair("T:", ta, tt);
  if (!ta || !tt) return std::nullopt;
  pair("B:", ba, bt);
  TempReport r;
  r.hotend_actual = *ta;
  r.hotend_target = *tt;
  if (ba && bt) {
    r.bed_actual = ba;
    r.bed_target = bt;
  }
  return r;
}

std::optional<PositionReport> parse_position(std::string_view s) {
  std::optional<double> v[4];
  const char keys[4] = {'X', 'Y', 'Z', 'E'};
  for (auto tok : text::split_ws(s)) {
    if (tok == "Count") break;
    if (tok.size() < 2 || tok[1] != ':') continue;
    for (int i = 0; i < 4; ++i) {
      if (tok[0] == keys[i] && !v[i]) v[i] = text::parse_double(tok.substr(2));
    }
  }
  if (!v[0] || !v[1] || !v[2] || !v[3]) return std::nullopt;
  return PositionReport{*v[0], *v[1], *v[2], *v[3]};
}

}  // namespace

ResponseEvent parse_response(std::string_view line) {
  const auto s = text::trim(line);
  if (starts_with(s, "ok") && (s.size() == 2 || s[2] == ' ' || s[2] == '\t')) {
    if (s.find("T:") != std::string_view::npos) {
      if (auto t = parse_temps(s.substr(2))) {
        t->ok = true;
        return *t;
      }
    }
    return Ok{};
  }
  if (starts_with(s, "echo:busy:") || starts_with(s, "busy:")) return Busy{};
  if (starts_with(s, "Error:")) return ErrorReport{std::string(text::trim(s.substr(6)))};
  if (starts_with(s, "Resend:") || starts_with(s, "rs ")) {
    const auto n = text::parse_long(text::trim(s.substr(s[0] == 'R' ? 7 : 3)));
    if (n && *n >= 0) return Resend{*n};
    return Unknown{std::string(line)};
  }
  if (starts_with(s, "X:")) {
    if (auto p = parse_position(s)) return *p;
  }
  if (starts_with(s, "T:")) {
    if (auto t = parse_temps(s)) return *t;
  }
  return Unknown{std::string(line)};
}

bool is_acknowledgment(const ResponseEvent& ev) {
  if (std::holds_alternative<Ok>(ev)) return true;
  if (const auto* t = std::get_if<TempReport>(&ev)) return t->ok;
  return false;
}

std::string format_position_report(const Position& p, const Position& steps_per_mm) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "X:%s Y:%s Z:%s E:%s Count X:%ld Y:%ld Z:%ld",
                text::format_fixed(p.x, 2).c_str(), text::format_fixed(p.y, 2).c_str(),
                text::format_fixed(p.z, 2).c_str(), text::format_fixed(p.e, 2).c_str(),
                std::lround(p.x * steps_per_mm.x), std::lround(p.y * steps_per_mm.y),
                std::lround(p.z * steps_per_mm.z));
  return buf;
}

std::string format_temp_report(double hotend, double hotend_target, double bed, double bed_target,
                               bool with_ok) {
  std::string s = with_ok ? "ok " : "";
  s += "T:" + text::format_fixed(hotend, 2) + " /" + text::format_fixed(hotend_target, 2);
  s += " B:" + text::format_fixed(bed, 2) + " /" + text::format_fixed(bed_target, 2);
  s += " @:0 B@:0";
  return s;
}

}  // namespace fab::gcode

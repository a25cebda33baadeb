#include "fab/command_list.hpp"

#include "fab/errors.hpp"
#include "fab/text.hpp"

namespace fab {

namespace {

using text::format_shortest;

std::string xyz(const Point3& p) {
  return format_shortest(p.x) + " " + format_shortest(p.y) + " " + format_shortest(p.z);
}

std::string opt(std::string_view key, const std::optional<double>& v) {
  return v ? " " + std::string(key) + "=" + format_shortest(*v) : std::string();
}

struct Formatter {
  std::string operator()(const MoveExtrude& c) const {
    return "move_extrude " + xyz(c.target) + opt("speed", c.speed) + opt("e", c.e_amount);
  }
  std::string operator()(const MoveRetract& c) const {
    return "move_retract " + xyz(c.target) + opt("speed", c.speed);
  }
  std::string operator()(const Travel& c) const {
    return "travel " + xyz(c.target) + opt("speed", c.speed);
  }
  std::string operator()(const SetNozzleTemp& c) const {
    return "set_nozzle_temp " + format_shortest(c.celsius) + (c.wait ? " wait" : "");
  }
  std::string operator()(const SetBedTemp& c) const {
    return "set_bed_temp " + format_shortest(c.celsius) + (c.wait ? " wait" : "");
  }
  std::string operator()(const AutoHome&) const { return "auto_home"; }
  std::string operator()(const SetMaxAcceleration& c) const {
    return "set_max_acceleration " + xyz({c.x, c.y, c.z}) + opt("e", c.e);
  }
  std::string operator()(const SetStartingAcceleration& c) const {
    return "set_starting_acceleration " + format_shortest(c.accel);
  }
  std::string operator()(const SetJerk& c) const {
    return "set_jerk " + xyz({c.x, c.y, c.z}) + opt("e", c.e);
  }
  std::string operator()(const Raw& c) const { return "raw " + c.line; }
};

class Args {
 public:
  Args(std::string_view line, std::vector<std::string_view> tokens)
      : line_(line), tokens_(std::move(tokens)) {}

  double number(std::size_t i) const {
    if (i >= tokens_.size()) fail("missing argument");
    auto v = text::parse_double(tokens_[i]);
    if (!v) fail("bad number '" + std::string(tokens_[i]) + "'");
    return *v;
  }

  // Parses trailing key=value options and bare flags starting at `first`.
  void options(std::size_t first, std::initializer_list<std::string_view> keys,
               std::initializer_list<std::string_view> flags) {
    for (std::size_t i = first; i < tokens_.size(); ++i) {
      auto tok = tokens_[i];
      auto eq = tok.find('=');
      if (eq == std::string_view::npos) {
        bool ok = false;
        for (auto f : flags) ok = ok || f == tok;
        if (!ok) fail("unexpected token '" + std::string(tok) + "'");
        flags_.push_back(tok);
        continue;
      }
      auto key = tok.substr(0, eq);
      bool ok = false;
      for (auto k : keys) ok = ok || k == key;
      if (!ok) fail("unknown option '" + std::string(key) + "'");
      auto v = text::parse_double(tok.substr(eq + 1));
      if (!v) fail("bad number for '" + std::string(key) + "'");
      values_.emplace_back(key, *v);
    }
  }

  std::optional<double> value(std::string_view key) const {
    for (const auto& [k, v] : values_) {
      if (k == key) return v;
    }
    return std::nullopt;
  }

  bool flag(std::string_view f) const {
    for (auto x : flags_) {
      if (x == f) return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("command list: " + what + " in '" + std::string(line_) + "'");
  }

 private:
  std::string_view line_;
  std::vector<std::string_view> tokens_;
  std::vector<std::pair<std::string_view, double>> values_;
  std::vector<std::string_view> flags_;
};

}  // namespace

std::string format_command(const Command& cmd) { return std::visit(Formatter{}, cmd); }

std::string to_command_list(std::span<const Command> commands) {
  std::string out;
  for (const auto& c : commands) {
    out += format_command(c);
    out += '\n';
  }
  return out;
}

Command parse_command(std::string_view line) {
  // Raw keeps everything after the first space verbatim.
  if (line.substr(0, 4) == "raw ") return Raw{std::string(line.substr(4))};
  if (line == "raw") return Raw{""};

  auto tokens = text::split_ws(line);
  if (tokens.empty()) throw ParseError("command list: empty command");
  const auto verb = tokens.front();
  Args args(line, tokens);

  auto point = [&] { return Point3{args.number(1), args.number(2), args.number(3)}; };

  if (verb == "move_extrude") {
    args.options(4, {"speed", "e"}, {});
    return MoveExtrude{point(), args.value("speed"), args.value("e")};
  }
  if (verb == "move_retract") {
    args.options(4, {"speed"}, {});
    return MoveRetract{point(), args.value("speed")};
  }
  if (verb == "travel") {
    args.options(4, {"speed"}, {});
    return Travel{point(), args.value("speed")};
  }
  if (verb == "set_nozzle_temp") {
    args.options(2, {}, {"wait"});
    return SetNozzleTemp{args.number(1), args.flag("wait")};
  }
  if (verb == "set_bed_temp") {
    args.options(2, {}, {"wait"});
    return SetBedTemp{args.number(1), args.flag("wait")};
  }
  if (verb == "auto_home") {
    args.options(1, {}, {});
    return AutoHome{};
  }
  if (verb == "set_max_acceleration") {
    args.options(4, {"e"}, {});
    return SetMaxAcceleration{args.number(1), args.number(2), args.number(3), args.value("e")};
  }
  if (verb == "set_starting_acceleration") {
    args.options(2, {}, {});
    return SetStartingAcceleration{args.number(1)};
  }
  if (verb == "set_jerk") {
    args.options(4, {"e"}, {});
    return SetJerk{args.number(1), args.number(2), args.number(3), args.value("e")};
  }
  args.fail("unknown command '" + std::string(verb) + "'");
}

std::vector<Command> parse_command_list(std::string_view text) {
  std::vector<Command> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto trimmed = text::trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    try {
      out.push_back(parse_command(trimmed.substr(0, 4) == "raw " ? line.substr(line.find("raw "))
                                                                 : trimmed));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fab

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fab/errors.hpp"
#include "fab/service.hpp"

namespace fab::service {

namespace {

using nlohmann::json;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

json pos4(const Position& p) { return json::array({p.x, p.y, p.z, p.e}); }
json pos3(const Point3& p) { return json::array({p.x, p.y, p.z}); }
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// Field access with schema errors reported as ParseError.
class Reader {
 public:
  Reader(const json& j, std::string type) : j_(j), type_(std::move(type)) {
    if (!j_.is_object()) fail("expected an object");
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(type_ + ": " + what);
  }

  const json& at(const char* key) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }
  bool has(const char* key) const { return j_.contains(key); }

  double number(const json& v, const char* key) const {
    if (!v.is_number()) fail(std::string("field '") + key + "' must be a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(std::string("field '") + key + "' must be finite");
    return d;
  }
  double number(const char* key) { return number(at(key), key); }
  std::optional<double> opt_number(const char* key) {
    const json& v = at(key);
    if (v.is_null()) return std::nullopt;
    return number(v, key);
  }
  std::string string(const char* key) {
    const json& v = at(key);
    if (!v.is_string()) fail(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
  }
  bool boolean(const char* key) {
    const json& v = at(key);
    if (!v.is_boolean()) fail(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
  }
  std::size_t count(const char* key) {
    const json& v = at(key);
    if (!v.is_number_unsigned()) fail(std::string("field '") + key + "' must be a count");
    return v.get<std::size_t>();
  }
  std::optional<std::int64_t> id() {
    if (!has("id")) return std::nullopt;
    const json& v = at("id");
    if (v.is_null()) return std::nullopt;
    if (!v.is_number_integer()) fail("field 'id' must be an integer");
    return v.get<std::int64_t>();
  }
  Position position(const json& v, const char* key) const {
    if (!v.is_array() || v.size() != 4) fail(std::string("field '") + key + "' must be [x, y, z, e]");
    return {number(v[0], key), number(v[1], key), number(v[2], key), number(v[3], key)};
  }
  Point3 point(const json& v, const char* key) const {
    if (!v.is_array() || v.size() != 3) fail(std::string("field '") + key + "' must be [x, y, z]");
    return {number(v[0], key), number(v[1], key), number(v[2], key)};
  }
  // Rejects fields this reader never asked for.
  void done() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (it.key() == "type") continue;
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
        fail("unknown field '" + it.key() + "'");
      }
    }
  }

 private:
  const json& j_;
  std::string type_;
  std::vector<std::string> seen_;
};

void put_id(json& j, const std::optional<std::int64_t>& id) {
  if (id) j["id"] = *id;
}

json segment_json(const Segment& s) {
  return {{"start", pos4(s.start)},  {"end", pos4(s.end)},
          {"feedrate", s.feedrate},  {"delta_e", s.delta_e},
          {"kind", to_string(s.kind)}, {"prime", s.prime},
          {"source", s.source}};
}

Segment segment_from(const json& v) {
  Reader r(v, "segment");
  Segment s;
  s.start = r.position(r.at("start"), "start");
  s.end = r.position(r.at("end"), "end");
  s.feedrate = r.number("feedrate");
  s.delta_e = r.number("delta_e");
  const std::string kind = r.string("kind");
  if (kind == "extrude") {
    s.kind = SegmentKind::kExtrude;
  } else if (kind == "travel") {
    s.kind = SegmentKind::kTravel;
  } else if (kind == "retract") {
    s.kind = SegmentKind::kRetract;
  } else {
    r.fail("unknown kind '" + kind + "'");
  }
  s.prime = r.boolean("prime");
  s.source = r.count("source");
  r.done();
  return s;
}

json stats_json(const ToolpathStats& s) {
  json b = nullptr;
  if (!s.bounds.empty) b = {{"min", pos3(s.bounds.min)}, {"max", pos3(s.bounds.max)}};
  return {{"extrude_length", s.extrude_length},
          {"travel_length", s.travel_length},
          {"total_e", s.total_e},
          {"extrude_segments", s.extrude_segments},
          {"travel_segments", s.travel_segments},
          {"retract_segments", s.retract_segments},
          {"bounds", b}};
}

ToolpathStats stats_from(const json& v) {
  Reader r(v, "stats");
  ToolpathStats s;
  s.extrude_length = r.number("extrude_length");
  s.travel_length = r.number("travel_length");
  s.total_e = r.number("total_e");
  s.extrude_segments = r.count("extrude_segments");
  s.travel_segments = r.count("travel_segments");
  s.retract_segments = r.count("retract_segments");
  const json& b = r.at("bounds");
  if (!b.is_null()) {
    Reader rb(b, "bounds");
    s.bounds.min = rb.point(rb.at("min"), "min");
    s.bounds.max = rb.point(rb.at("max"), "max");
    s.bounds.empty = false;
    rb.done();
  }
  r.done();
  return s;
}

json temp_json(const host::Temperature& t) {
  return {{"actual", opt(t.actual)}, {"target", opt(t.target)}};
}

host::Temperature temp_from(const json& v) {
  Reader r(v, "temperature");
  host::Temperature t{r.opt_number("actual"), r.opt_number("target")};
  r.done();
  return t;
}

json state_json(const host::PrinterState& s) {
  const auto& p = s.progress;
  return {{"position", s.position ? pos4(*s.position) : json(nullptr)},
          {"hotend", temp_json(s.hotend)},
          {"bed", temp_json(s.bed)},
          {"link", to_string(s.link)},
          {"progress",
           {{"sent", p.sent},
            {"acked", p.acked},
            {"errored", p.errored},
            {"timed_out", p.timed_out},
            {"total", p.total}}},
          {"last_error", s.last_error ? json(*s.last_error) : json(nullptr)}};
}

host::PrinterState state_from(const json& v) {
  Reader r(v, "state");
  host::PrinterState s;
  const json& pos = r.at("position");
  if (!pos.is_null()) s.position = r.position(pos, "position");
  s.hotend = temp_from(r.at("hotend"));
  s.bed = temp_from(r.at("bed"));
  const std::string link = r.string("link");
  bool found = false;
  for (auto l : {host::LinkState::kDisconnected, host::LinkState::kIdle,
                 host::LinkState::kStreaming, host::LinkState::kPaused, host::LinkState::kError}) {
    if (to_string(l) == link) {
      s.link = l;
      found = true;
    }
  }
  if (!found) r.fail("unknown link state '" + link + "'");
  Reader rp(r.at("progress"), "progress");
  s.progress = {rp.count("sent"), rp.count("acked"), rp.count("errored"), rp.count("timed_out"),
                rp.count("total")};
  rp.done();
  const json& err = r.at("last_error");
  if (!err.is_null()) s.last_error = r.string("last_error");
  r.done();
  return s;
}

json parse_object(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string("message is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError("message must be a JSON object");
  auto t = j.find("type");
  if (t == j.end() || !t->is_string()) throw ParseError("message needs a string 'type'");
  return j;
}

}  // namespace

std::string_view message_type(const ClientMessage& m) {
  return std::visit(Overloaded{
                        [](const LoadProgram&) { return "LoadProgram"; },
                        [](const StartStream&) { return "StartStream"; },
                        [](const Pause&) { return "Pause"; },
                        [](const Resume&) { return "Resume"; },
                        [](const Stop&) { return "Stop"; },
                        [](const Inject&) { return "Inject"; },
                        [](const Jog&) { return "Jog"; },
                        [](const ProbeCapture&) { return "ProbeCapture"; },
                        [](const SetBoundsMode&) { return "SetBoundsMode"; },
                    },
                    m);
}

std::string_view message_type(const ServiceMessage& m) {
  return std::visit(Overloaded{
                        [](const ProgramLoaded&) { return "ProgramLoaded"; },
                        [](const StateUpdate&) { return "StateUpdate"; },
                        [](const WireEvent&) { return "WireEvent"; },
                        [](const ProbeStored&) { return "ProbeStored"; },
                        [](const Fault&) { return "Fault"; },
                        [](const Ack&) { return "Ack"; },
                    },
                    m);
}

std::optional<std::int64_t> message_id(const ClientMessage& m) {
  return std::visit([](const auto& v) { return v.id; }, m);
}

std::string encode(const ClientMessage& m) {
  json j;
  j["type"] = message_type(m);
  std::visit(Overloaded{
                 [&](const LoadProgram& v) {
                   put_id(j, v.id);
                   if (v.gcode) j["gcode"] = *v.gcode;
                   if (v.recipe) j["recipe"] = *v.recipe;
                   if (!v.params.empty()) j["params"] = v.params;
                 },
                 [&](const Inject& v) {
                   put_id(j, v.id);
                   j["command"] = v.command;
                 },
                 [&](const Jog& v) {
                   put_id(j, v.id);
                   j["dx"] = v.dx;
                   j["dy"] = v.dy;
                   j["dz"] = v.dz;
                   j["speed"] = v.speed;
                 },
                 [&](const ProbeCapture& v) {
                   put_id(j, v.id);
                   j["label"] = v.label;
                 },
                 [&](const SetBoundsMode& v) {
                   put_id(j, v.id);
                   j["mode"] = to_string(v.mode);
                 },
                 [&](const auto& v) { put_id(j, v.id); },
             },
             m);
  return j.dump();
}

std::string encode(const ServiceMessage& m) {
  json j;
  j["type"] = message_type(m);
  std::visit(Overloaded{
                 [&](const ProgramLoaded& v) {
                   put_id(j, v.id);
                   json segs = json::array();
                   for (const auto& s : v.segments) segs.push_back(segment_json(s));
                   j["segments"] = std::move(segs);
                   j["stats"] = stats_json(v.stats);
                   json diags = json::array();
                   for (const auto& d : v.diagnostics) {
                     diags.push_back({{"index", d.index}, {"message", d.message}});
                   }
                   j["diagnostics"] = std::move(diags);
                   j["violations"] = v.violations;
                   j["lines"] = v.lines;
                 },
                 [&](const StateUpdate& v) { j["state"] = state_json(v.state); },
                 [&](const WireEvent& v) {
                   j["direction"] = to_string(v.record.direction);
                   j["line"] = v.record.payload;
                   j["timestamp"] = v.record.time;
                 },
                 [&](const ProbeStored& v) {
                   put_id(j, v.id);
                   j["label"] = v.label;
                   j["position"] = pos4(v.position);
                 },
                 [&](const Fault& v) {
                   put_id(j, v.id);
                   j["message"] = v.message;
                 },
                 [&](const Ack& v) {
                   put_id(j, v.id);
                   j["request"] = v.request;
                 },
             },
             m);
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

ClientMessage decode_client(std::string_view line) {
  const json j = parse_object(line);
  const std::string type = j["type"].get<std::string>();
  Reader r(j, type);
  ClientMessage out;
  if (type == "LoadProgram") {
    LoadProgram m;
    m.id = r.id();
    if (r.has("gcode")) m.gcode = r.string("gcode");
    if (r.has("recipe")) m.recipe = r.string("recipe");
    if (r.has("params")) {
      const json& p = r.at("params");
      if (!p.is_object()) r.fail("field 'params' must be an object");
      for (auto it = p.begin(); it != p.end(); ++it) {
        if (!it->is_string()) r.fail("param '" + it.key() + "' must be a string");
        m.params[it.key()] = it->get<std::string>();
      }
    }
    if (m.gcode.has_value() == m.recipe.has_value()) r.fail("give exactly one of gcode, recipe");
    if (m.gcode && !m.params.empty()) r.fail("params only apply to recipes");
    out = std::move(m);
  } else if (type == "StartStream") {
    out = StartStream{r.id()};
  } else if (type == "Pause") {
    out = Pause{r.id()};
  } else if (type == "Resume") {
    out = Resume{r.id()};
  } else if (type == "Stop") {
    out = Stop{r.id()};
  } else if (type == "Inject") {
    Inject m;
    m.id = r.id();
    m.command = r.string("command");
    out = std::move(m);
  } else if (type == "Jog") {
    Jog m;
    m.id = r.id();
    m.dx = r.number("dx");
    m.dy = r.number("dy");
    m.dz = r.number("dz");
    m.speed = r.number("speed");
    out = m;
  } else if (type == "ProbeCapture") {
    ProbeCapture m;
    m.id = r.id();
    m.label = r.string("label");
    out = std::move(m);
  } else if (type == "SetBoundsMode") {
    SetBoundsMode m;
    m.id = r.id();
    const auto mode = parse_bounds_mode(r.string("mode"));
    if (!mode) r.fail("mode must be strict or permissive");
    m.mode = *mode;
    out = m;
  } else {
    throw ParseError("unknown client message type '" + type + "'");
  }
  r.done();
  return out;
}

ServiceMessage decode_service(std::string_view line) {
  const json j = parse_object(line);
  const std::string type = j["type"].get<std::string>();
  Reader r(j, type);
  ServiceMessage out;
  if (type == "ProgramLoaded") {
    ProgramLoaded m;
    m.id = r.id();
    const json& segs = r.at("segments");
    if (!segs.is_array()) r.fail("field 'segments' must be an array");
    for (const auto& s : segs) m.segments.push_back(segment_from(s));
    m.stats = stats_from(r.at("stats"));
    const json& diags = r.at("diagnostics");
    if (!diags.is_array()) r.fail("field 'diagnostics' must be an array");
    for (const auto& d : diags) {
      Reader rd(d, "diagnostic");
      m.diagnostics.push_back({rd.count("index"), rd.string("message")});
      rd.done();
    }
    m.violations = r.count("violations");
    m.lines = r.count("lines");
    out = std::move(m);
  } else if (type == "StateUpdate") {
    out = StateUpdate{state_from(r.at("state"))};
  } else if (type == "WireEvent") {
    WireEvent m;
    const std::string dir = r.string("direction");
    if (dir != "tx" && dir != "rx") r.fail("direction must be tx or rx");
    m.record.direction = dir == "tx" ? host::Direction::kTx : host::Direction::kRx;
    m.record.payload = r.string("line");
    m.record.time = r.number("timestamp");
    out = std::move(m);
  } else if (type == "ProbeStored") {
    ProbeStored m;
    m.id = r.id();
    m.label = r.string("label");
    m.position = r.position(r.at("position"), "position");
    out = std::move(m);
  } else if (type == "Fault") {
    out = Fault{r.id(), r.string("message")};
  } else if (type == "Ack") {
    out = Ack{r.id(), r.string("request")};
  } else {
    throw ParseError("unknown service message type '" + type + "'");
  }
  r.done();
  return out;
}

}  // namespace fab::service

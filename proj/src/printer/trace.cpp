#include <json.hpp>

#include "fab/errors.hpp"
#include "fab/printer.hpp"
#include "fab/text.hpp"

namespace fab::printer {

namespace {

using nlohmann::json;

json position_json(const Position& p) { return json::array({p.x, p.y, p.z, p.e}); }

Position position_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw ParseError("trace: position must be [x, y, z, e]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

SegmentKind kind_from(const std::string& s) {
  if (s == "extrude") return SegmentKind::kExtrude;
  if (s == "travel") return SegmentKind::kTravel;
  if (s == "retract") return SegmentKind::kRetract;
  throw ParseError("trace: unknown kind '" + s + "'");
}

}  // namespace

std::string trace_to_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    json j;
    j["t_start"] = r.t_start;
    j["t_end"] = r.t_end;
    j["start"] = position_json(r.start);
    j["end"] = position_json(r.end);
    j["feedrate"] = r.feedrate;
    j["delta_e"] = r.delta_e;
    j["kind"] = std::string(to_string(r.kind));
    j["accel"] = r.accel;
    j["junction_speed"] = r.junction_speed;
    j["length"] = r.length;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TraceRecord> trace_from_jsonl(std::string_view text) {
  std::vector<TraceRecord> out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    const auto line = fab::text::trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      TraceRecord r;
      r.t_start = j.at("t_start").get<double>();
      r.t_end = j.at("t_end").get<double>();
      r.start = position_from(j.at("start"));
      r.end = position_from(j.at("end"));
      r.feedrate = j.at("feedrate").get<double>();
      r.delta_e = j.at("delta_e").get<double>();
      r.kind = kind_from(j.at("kind").get<std::string>());
      r.accel = j.at("accel").get<double>();
      r.junction_speed = j.at("junction_speed").get<double>();
      r.length = j.at("length").get<double>();
      out.push_back(r);
    } catch (const json::exception& e) {
      throw ParseError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace fab::printer

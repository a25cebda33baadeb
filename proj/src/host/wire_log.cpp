#include "fab/gcode.hpp"
#include "fab/host.hpp"
#include "fab/text.hpp"

namespace fab::host {

std::string format_wire_record(const WireRecord& r) {
  return text::format_fixed(r.time, 6) + "\t" + std::string(to_string(r.direction)) + "\t" +
         r.payload;
}

std::optional<WireRecord> parse_wire_record(std::string_view line) {
  const auto t1 = line.find('\t');
  if (t1 == std::string_view::npos) return std::nullopt;
  const auto t2 = line.find('\t', t1 + 1);
  if (t2 == std::string_view::npos) return std::nullopt;
  const auto time = text::parse_double(line.substr(0, t1));
  const auto dir = line.substr(t1 + 1, t2 - t1 - 1);
  if (!time || (dir != "tx" && dir != "rx")) return std::nullopt;
  return WireRecord{*time, dir == "tx" ? Direction::kTx : Direction::kRx,
                    std::string(line.substr(t2 + 1))};
}

std::string format_wire_log(const std::vector<WireRecord>& log) {
  std::string out;
  for (const auto& r : log) {
    out += format_wire_record(r);
    out += '\n';
  }
  return out;
}

std::vector<WireRecord> parse_wire_log(std::string_view text) {
  std::vector<WireRecord> out;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (line.empty()) continue;
    if (auto r = parse_wire_record(line)) out.push_back(std::move(*r));
  }
  return out;
}

FlowCheck check_flow_window(const std::vector<WireRecord>& log) {
  FlowCheck c;
  std::size_t outstanding = 0;
  for (const auto& r : log) {
    if (r.direction == Direction::kTx) {
      if (outstanding > 0) ++c.violations;
      ++outstanding;
      c.max_outstanding = std::max(c.max_outstanding, outstanding);
      continue;
    }
    const auto ev = gcode::parse_response(r.payload);
    if (gcode::is_acknowledgment(ev) || std::holds_alternative<gcode::ErrorReport>(ev)) {
      if (outstanding > 0) --outstanding;
    }
  }
  return c;
}

}  // namespace fab::host

#include <algorithm>
#include <cmath>

#include "fab/cli.hpp"
#include "fab/text.hpp"

namespace fab::cli {

namespace {

constexpr double kScale = 2.0;  // px per mm
constexpr double kMargin = 20.0;
constexpr double kGap = 40.0;
constexpr double kStatsHeight = 130.0;

std::string num(double v) { return text::format_fixed(v, 2); }

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Slow extrusions are blue, fast ones red.
std::string feed_color(double f, double lo, double hi) {
  const double t = hi > lo ? std::clamp((f - lo) / (hi - lo), 0.0, 1.0) : 0.0;
  return "hsl(" + std::to_string(static_cast<int>(std::lround(240.0 * (1.0 - t)))) + ",80%,45%)";
}

struct View {
  std::string id;
  double ox, oy;  // top-left of the plot area, px
  double w, h;    // plot size, mm
  bool side;      // x/z instead of x/y

  double px(const Point3& p) const { return ox + p.x * kScale; }
  double py(const Point3& p) const { return oy + (h - (side ? p.z : p.y)) * kScale; }
};

void draw_view(std::string& svg, const View& v, std::span<const Segment> segments,
               std::span<const Violation> violations, double lo, double hi) {
  svg += "<g id=\"" + v.id + "\">\n";
  svg += "<rect class=\"envelope\" x=\"" + num(v.ox) + "\" y=\"" + num(v.oy) + "\" width=\"" +
         num(v.w * kScale) + "\" height=\"" + num(v.h * kScale) +
         "\" fill=\"#fafafa\" stroke=\"#333\"/>\n";
  svg += "<text x=\"" + num(v.ox) + "\" y=\"" + num(v.oy - 6) + "\" font-size=\"12\">" +
         (v.side ? "side (XZ)" : "top (XY)") + "</text>\n";
  for (const auto& s : segments) {
    const Point3 a = s.start.xyz();
    const Point3 b = s.end.xyz();
    std::string cls;
    std::string style;
    if (s.kind == SegmentKind::kExtrude) {
      cls = s.prime ? "prime" : "extrude";
      style = "stroke=\"" + feed_color(s.feedrate, lo, hi) + "\" stroke-width=\"1.2\"";
    } else if (s.kind == SegmentKind::kRetract) {
      cls = "retract";
      style = "stroke=\"#f80\" stroke-width=\"1.2\"";
    } else {
      cls = "travel";
      style = "stroke=\"#aaa\" stroke-width=\"0.6\" stroke-dasharray=\"3,2\"";
    }
    svg += "<line class=\"" + cls + "\" x1=\"" + num(v.px(a)) + "\" y1=\"" + num(v.py(a)) +
           "\" x2=\"" + num(v.px(b)) + "\" y2=\"" + num(v.py(b)) + "\" " + style + "/>\n";
    if (s.length() == 0.0 && s.kind != SegmentKind::kTravel) {
      svg += "<circle class=\"" + cls + "-mark\" cx=\"" + num(v.px(b)) + "\" cy=\"" +
             num(v.py(b)) + "\" r=\"2\" fill=\"" + (cls == "retract" ? "#f80" : "#2a2") +
             "\"/>\n";
    }
  }
  for (const auto& viol : violations) {
    svg += "<circle class=\"violation\" cx=\"" + num(v.px(viol.point)) + "\" cy=\"" +
           num(v.py(viol.point)) + "\" r=\"5\" fill=\"none\" stroke=\"#e00\" stroke-width=\"2\"/>\n";
  }
  svg += "</g>\n";
}

}  // namespace

std::string render_svg(const MachineProfile& profile, std::span<const Segment> segments,
                       std::span<const Violation> violations, const RenderStats& stats) {
  double lo = 0, hi = 0;
  bool any = false;
  for (const auto& s : segments) {
    if (s.kind != SegmentKind::kExtrude || s.prime) continue;
    lo = any ? std::min(lo, s.feedrate) : s.feedrate;
    hi = any ? std::max(hi, s.feedrate) : s.feedrate;
    any = true;
  }

  const View top{"top", kMargin, kMargin + 16, profile.max_x, profile.max_y, false};
  const View side{"side", kMargin, top.oy + profile.max_y * kScale + kGap, profile.max_x,
                  profile.max_z, true};
  const double stats_y = side.oy + profile.max_z * kScale + kGap;
  const double width = 2 * kMargin + profile.max_x * kScale;
  const double height = stats_y + kStatsHeight;

  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) +
         "\" font-family=\"monospace\">\n";
  svg += "<title>" + escape(profile.name) + " toolpath</title>\n";
  draw_view(svg, top, segments, violations, lo, hi);
  draw_view(svg, side, segments, violations, lo, hi);

  const auto& t = stats.toolpath;
  const std::vector<std::string> rows = {
      "segments: " + std::to_string(segments.size()) + " (extrude " +
          std::to_string(t.extrude_segments) + ", travel " + std::to_string(t.travel_segments) +
          ", retract " + std::to_string(t.retract_segments) + ")",
      "extrude length: " + num(t.extrude_length) + " mm",
      "travel length: " + num(t.travel_length) + " mm",
      "total E: " + text::format_fixed(t.total_e, 5) + " mm",
      "duration: " + num(stats.duration) + " s",
      "warnings: " + std::to_string(stats.warnings),
      any ? "feedrate: " + num(lo) + " (blue) to " + num(hi) + " (red) mm/s" : "feedrate: none",
  };
  svg += "<g id=\"stats\">\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    svg += "<text x=\"" + num(kMargin) + "\" y=\"" + num(stats_y + 16.0 * static_cast<double>(i)) +
           "\" font-size=\"12\"" + (rows[i].starts_with("warnings") && stats.warnings
                                        ? " fill=\"#e00\""
                                        : "") +
           ">" + escape(rows[i]) + "</text>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace fab::cli

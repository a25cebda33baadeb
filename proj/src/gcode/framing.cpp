#include <cctype>

#include "fab/errors.hpp"
#include "fab/gcode.hpp"
#include "fab/text.hpp"

namespace fab::gcode {

std::uint8_t checksum(std::string_view bytes) {
  std::uint8_t cs = 0;
  for (unsigned char c : bytes) cs ^= c;
  return cs;
}

std::string frame_line(std::string_view text, long line_number) {
  if (text.empty()) throw ArgumentError("frameLine: empty line");
  if (text.find_first_of("*\r\n") != std::string_view::npos) {
    throw ArgumentError("frameLine: line contains '*' or a line terminator");
  }
  if (line_number < 0) throw ArgumentError("frameLine: negative line number");
  std::string body = "N" + std::to_string(line_number) + " " + std::string(text);
  const int cs = checksum(body);
  return body + "*" + std::to_string(cs);
}

std::optional<GcodeLine> unframe_line(std::string_view framed) {
  if (framed.size() < 5 || framed.front() != 'N') return std::nullopt;
  const auto star = framed.rfind('*');
  if (star == std::string_view::npos) return std::nullopt;
  const auto body = framed.substr(0, star);
  const auto cs_text = framed.substr(star + 1);
  if (cs_text.empty() || cs_text.size() > 3) return std::nullopt;
  for (char c : cs_text) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  }
  const auto cs = text::parse_long(cs_text);
  if (!cs || *cs > 255) return std::nullopt;

  std::size_t i = 1;
  while (i < body.size() && std::isdigit(static_cast<unsigned char>(body[i]))) ++i;
  if (i == 1 || i >= body.size() || body[i] != ' ') return std::nullopt;
  const auto number = text::parse_long(body.substr(1, i - 1));
  const auto line = body.substr(i + 1);
  if (!number || line.empty() || line.find('*') != std::string_view::npos) return std::nullopt;
  if (checksum(body) != *cs) return std::nullopt;
  return GcodeLine{std::string(line), *number, static_cast<int>(*cs)};
}

}  // namespace fab::gcode

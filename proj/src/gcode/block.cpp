#include <cctype>
#include <cmath>

#include "fab/gcode.hpp"
#include "fab/text.hpp"

namespace fab::gcode {

namespace {

bool numeric_command(char letter, int code) {
  if (letter == 'G') return code == 0 || code == 1 || code == 4 || code == 28 || code == 92;
  if (letter == 'M') {
    return code == 104 || code == 109 || code == 140 || code == 190 || code == 201 ||
           code == 204 || code == 205 || code == 110;
  }
  return false;
}

bool number_char(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '+';
}

// Parses "X10 Y-2.5E3" style words. Returns the offending token on failure.
std::optional<std::string> parse_words(std::string_view s, bool allow_empty,
                                       std::vector<Word>& out) {
  auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  auto token_at = [&](std::size_t from) {
    std::size_t k = from;
    while (k < s.size() && s[k] != ' ' && s[k] != '\t') ++k;
    return std::string(s.substr(from, k - from));
  };
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] == ' ' || s[i] == '\t') {
      ++i;
      continue;
    }
    if (!is_alpha(s[i])) return token_at(i);
    const std::size_t start = i;
    const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s[i])));
    std::size_t j = i + 1;
    while (j < s.size() && number_char(s[j])) ++j;
    const auto num = s.substr(i + 1, j - i - 1);
    const bool ends_ok = j == s.size() || s[j] == ' ' || s[j] == '\t' || is_alpha(s[j]);
    std::optional<double> value;
    if (num.empty()) {
      if (allow_empty) value = 0.0;
    } else {
      value = text::parse_double(num);
    }
    if (!value || !ends_ok) return token_at(start);
    out.push_back({letter, *value});
    i = j;
  }
  return std::nullopt;
}

}  // namespace

const Word* Block::find(char l) const {
  for (const auto& w : words) {
    if (w.letter == l) return &w;
  }
  return nullptr;
}

std::string strip_line(std::string_view line) {
  std::string out;
  out.reserve(line.size());
  bool in_paren = false;
  for (char c : line) {
    if (c == ';') break;
    if (in_paren) {
      if (c == ')') in_paren = false;
      continue;
    }
    if (c == '(') {
      in_paren = true;
      continue;
    }
    out.push_back(c);
  }
  if (auto star = out.find('*'); star != std::string::npos) out.erase(star);
  std::string_view v = text::trim(out);
  if (v.size() > 1 && (v[0] == 'N' || v[0] == 'n') &&
      std::isdigit(static_cast<unsigned char>(v[1]))) {
    std::size_t i = 1;
    while (i < v.size() && std::isdigit(static_cast<unsigned char>(v[i]))) ++i;
    v = text::trim(v.substr(i));
  }
  return std::string(v);
}

BlockParse parse_block(std::string_view line) {
  const std::string s = strip_line(line);
  if (s.empty()) return {};
  const char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  std::size_t i = 1;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) || i == 1) {
    return {std::nullopt, "malformed command word in '" + s + "'"};
  }
  // "G1.5" and the like are not commands we can interpret.
  if (i < s.size() && s[i] != ' ' && s[i] != '\t' && !std::isalpha(static_cast<unsigned char>(s[i]))) {
    return {std::nullopt, "malformed command word in '" + s + "'"};
  }
  Block b;
  b.letter = letter;
  b.code = static_cast<int>(*text::parse_long(std::string_view(s).substr(1, i - 1)));
  b.args = std::string(text::trim(std::string_view(s).substr(i)));

  if (numeric_command(letter, b.code)) {
    const bool allow_empty = letter == 'G' && b.code == 28;
    if (auto bad = parse_words(b.args, allow_empty, b.words)) {
      return {std::nullopt, "malformed numeric field '" + *bad + "'"};
    }
  } else {
    std::vector<Word> words;
    if (!parse_words(b.args, true, words)) b.words = std::move(words);
  }
  return {std::move(b), std::nullopt};
}

std::optional<Motion> Interpreter::preview(const Block& block) const {
  Interpreter copy = *this;
  return copy.apply(block);
}

std::optional<Motion> Interpreter::apply(const Block& b) {
  if (b.letter == 'G' && (b.code == 0 || b.code == 1)) {
    Motion m;
    m.start = position_;
    m.rapid = b.code == 0;
    Position end = position_;
    const bool rel = modal_.positioning == Mode::kRelative;
    auto axis = [&](char l, double& v) {
      if (const Word* w = b.find(l)) {
        v = rel ? v + w->value : w->value;
        m.has_xyz = true;
      }
    };
    axis('X', end.x);
    axis('Y', end.y);
    axis('Z', end.z);
    if (const Word* w = b.find('E')) {
      end.e = modal_.extruder == Mode::kRelative ? end.e + w->value : w->value;
      m.has_e = true;
    }
    if (const Word* w = b.find('F'); w && w->value > 0) {
      feedrate_ = w->value;
      modal_.last_feedrate = static_cast<int>(std::lround(w->value));
    }
    if (feedrate_) m.feedrate = *feedrate_ / 60.0;
    m.end = end;
    position_ = end;
    return m;
  }
  if (b.letter == 'G' && b.code == 28) {
    const bool all = !b.has('X') && !b.has('Y') && !b.has('Z');
    if (all || b.has('X')) position_.x = 0;
    if (all || b.has('Y')) position_.y = 0;
    if (all || b.has('Z')) position_.z = 0;
  } else if (b.letter == 'G' && b.code == 90) {
    modal_.positioning = Mode::kAbsolute;
    modal_.extruder = Mode::kAbsolute;
  } else if (b.letter == 'G' && b.code == 91) {
    modal_.positioning = Mode::kRelative;
    modal_.extruder = Mode::kRelative;
  } else if (b.letter == 'M' && b.code == 82) {
    modal_.extruder = Mode::kAbsolute;
  } else if (b.letter == 'M' && b.code == 83) {
    modal_.extruder = Mode::kRelative;
  } else if (b.letter == 'G' && b.code == 92) {
    if (const Word* w = b.find('X')) position_.x = w->value;
    if (const Word* w = b.find('Y')) position_.y = w->value;
    if (const Word* w = b.find('Z')) position_.z = w->value;
    if (const Word* w = b.find('E')) position_.e = w->value;
  }
  return std::nullopt;
}

}  // namespace fab::gcode

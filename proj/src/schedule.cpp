#include "regseg/schedule.hpp"

#include <cctype>
#include <limits>

#include "regseg/errors.hpp"

namespace regseg {

namespace {

class ScheduleParser {
 public:
  explicit ScheduleParser(std::string_view text) : text_(text) {}

  DilationSchedule parse() {
    DilationSchedule out;
    skip_ws();
    if (at_end()) throw SyntaxError("empty dilation schedule", pos_);
    parse_term(out);
    skip_ws();
    while (!at_end()) {
      expect('+');
      parse_term(out);
      skip_ws();
    }
    return out;
  }

 private:
  void parse_term(DilationSchedule& out) {
    skip_ws();
    long count = 1;
    if (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
      const std::size_t at = pos_;
      count = parse_int();
      if (count < 1) {
        throw ValueError("repeat count must be >= 1 (position " +
                         std::to_string(at) + ")");
      }
      skip_ws();
      expect('*');
      skip_ws();
    }
    expect('(');
    DilationTuple tuple;
    tuple.push_back(parse_rate());
    skip_ws();
    while (!at_end() && peek() == ',') {
      ++pos_;
      tuple.push_back(parse_rate());
      skip_ws();
    }
    expect(')');
    for (long i = 0; i < count; ++i) out.blocks.push_back(tuple);
  }

  int parse_rate() {
    skip_ws();
    const std::size_t at = pos_;
    bool negative = false;
    if (!at_end() && peek() == '-') {
      negative = true;
      ++pos_;
    }
    const long v = parse_int();
    if (negative || v < 1) {
      throw ValueError("dilation rate must be >= 1 (position " +
                       std::to_string(at) + ")");
    }
    return static_cast<int>(v);
  }

  long parse_int() {
    if (at_end() || !std::isdigit(static_cast<unsigned char>(peek()))) {
      throw SyntaxError("expected integer", pos_);
    }
    long v = 0;
    while (!at_end() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > std::numeric_limits<int>::max()) {
        throw SyntaxError("integer too large", pos_);
      }
      ++pos_;
    }
    return v;
  }

  void expect(char c) {
    skip_ws();
    if (at_end() || peek() != c) {
      throw SyntaxError(std::string("expected '") + c + "'", pos_);
    }
    ++pos_;
  }

  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) ++pos_;
  }
  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string format_tuple(const DilationTuple& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t[i]);
  }
  return s + ")";
}

}  // namespace

DilationSchedule parse_schedule(std::string_view text) {
  return ScheduleParser(text).parse();
}

std::string format_schedule(const DilationSchedule& schedule) {
  std::string out;
  std::size_t i = 0;
  while (i < schedule.blocks.size()) {
    std::size_t j = i + 1;
    while (j < schedule.blocks.size() && schedule.blocks[j] == schedule.blocks[i]) ++j;
    if (!out.empty()) out += "+";
    if (j - i > 1) out += std::to_string(j - i) + "*";
    out += format_tuple(schedule.blocks[i]);
    i = j;
  }
  return out;
}

}  // namespace regseg

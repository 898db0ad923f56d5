#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace regseg {

// Dilation rates of one D block, one entry per parallel branch.
using DilationTuple = std::vector<int>;

// Per-block dilation tuples, written like "(1,1)+(1,2)+4*(1,4)+7*(1,14)".
struct DilationSchedule {
  std::vector<DilationTuple> blocks;

  std::size_t size() const { return blocks.size(); }
  friend bool operator==(const DilationSchedule&, const DilationSchedule&) = default;
};

// Grammar:  schedule := term ('+' term)*
//           term     := [count '*'] '(' int (',' int)* ')'
// Whitespace is ignored. Throws SyntaxError (with 0-based position) on malformed
// input and ValueError on rates or counts < 1.
DilationSchedule parse_schedule(std::string_view text);

// Canonical shorthand: consecutive equal tuples are folded into "n*(...)".
std::string format_schedule(const DilationSchedule& schedule);

inline constexpr const char* kDefaultSchedule = "(1,1)+(1,2)+4*(1,4)+7*(1,14)";

}  // namespace regseg

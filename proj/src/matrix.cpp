#include "talift/matrix.hpp"

#include <fmt/format.h>

namespace talift {

std::string to_string(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows; ++r) {
    out += '[';
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out += ", ";
      out += fmt::format("{}", m(r, c));
    }
    out += "]\n";
  }
  return out;
}

}  // namespace talift

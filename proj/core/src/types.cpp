#include "lvg/types.hpp"

#include <algorithm>

namespace lvg {

std::size_t Mask::area() const {
  std::size_t n = 0;
  for (auto v : data) n += v != 0;
  return n;
}

std::optional<Box> tight_box(const Mask& mask) {
  Box b{mask.width, mask.height, -1, -1};
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      if (!mask.at(r, c)) continue;
      b.x_min = std::min(b.x_min, c);
      b.y_min = std::min(b.y_min, r);
      b.x_max = std::max(b.x_max, c);
      b.y_max = std::max(b.y_max, r);
    }
  }
  if (b.x_max < 0) return std::nullopt;
  return b;
}

}  // namespace lvg

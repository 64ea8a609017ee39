#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lvg/tensor.hpp"

namespace lvg {

/// Interleaved H x W x 3 image with channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int r, int c, int ch) { return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch]; }
  float at(int r, int c, int ch) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
  }
};

/// Binary H x W mask, row-major.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t& at(int r, int c) { return data[static_cast<std::size_t>(r) * width + c]; }
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  std::size_t area() const;
  bool empty() const { return area() == 0; }
  bool operator==(const Mask&) const = default;
};

/// Inclusive pixel box.
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  long area() const { return static_cast<long>(x_max - x_min + 1) * (y_max - y_min + 1); }
  bool operator==(const Box&) const = default;
};

/// Tight box around the nonzero pixels, nullopt when there are none.
std::optional<Box> tight_box(const Mask& mask);

struct SceneSample {
  std::uint64_t id = 0;
  Image image;
  std::vector<int> token_ids;
  Mask gt_mask;
  std::optional<Box> gt_box;
  bool no_target = false;
  std::string expression;  // human-readable form of token_ids
};

}  // namespace lvg

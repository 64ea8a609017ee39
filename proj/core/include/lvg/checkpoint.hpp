#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "lvg/config.hpp"
#include "lvg/model.hpp"
#include "lvg/tensor.hpp"

namespace lvg {

/// Self-describing snapshot: the config text plus every named parameter
/// with its shape.
struct Checkpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Matrix> tensors;

  static Checkpoint capture(const LatentVG& model, std::uint64_t step);

  void save(const std::filesystem::path& path) const;
  /// Throws FormatError on a bad magic, truncation or trailing bytes.
  static Checkpoint load(const std::filesystem::path& path);

  /// Builds a model from the stored config and copies every tensor in.
  /// Throws FormatError on missing or extra names, ShapeMismatch on shape
  /// disagreement.
  std::unique_ptr<LatentVG> restore() const;
  void apply_to(LatentVG& model) const;
};

}  // namespace lvg

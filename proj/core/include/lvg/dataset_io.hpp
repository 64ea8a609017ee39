#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lvg/synthetic_data.hpp"
#include "lvg/types.hpp"

namespace lvg::io {

/// Run lengths of alternating 0/1 runs in row-major order, starting with a
/// (possibly empty) run of zeros.
std::vector<int> rle_encode(const Mask& mask);
Mask rle_decode(const std::vector<int>& runs, int height, int width);

/// Writes <dir>/images.raw and <dir>/annotations.jsonl. Pixel values are
/// quantized to bytes.
void save_split(const std::filesystem::path& dir, const std::vector<SceneSample>& samples);
/// Throws FormatError on malformed or truncated files.
std::vector<SceneSample> load_split(const std::filesystem::path& dir);

/// Lowercase hex SHA-256 over every file under `root` (relative path and
/// bytes, in sorted path order).
std::string dataset_hash(const std::filesystem::path& root);

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(const std::string& bytes);

inline std::filesystem::path vocab_path(const std::filesystem::path& root) {
  return root / "vocab.txt";
}

}  // namespace lvg::io

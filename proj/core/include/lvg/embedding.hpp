#pragma once

#include <span>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/config.hpp"
#include "lvg/parameters.hpp"
#include "lvg/types.hpp"

namespace lvg {

/// The token streams flowing through the encoder.
///   visual:  (n+1) x d, row 0 is the class / visual-subject slot
///   textual: (m+1) x d, row 0 is the text class token
///   latents: N matrices of (k_i+2) x d: [class, subject, attributes...]
struct EmbeddingSet {
  ad::Var visual;
  ad::Var textual;
  std::vector<ad::Var> latents;
};

struct EmbeddingParams {
  Parameter* patch_proj;  // (p*p*3) x d
  Parameter* patch_bias;  // 1 x d
  Parameter* visual_cls;  // 1 x d
  Parameter* visual_pos;  // (n+1) x d
  Parameter* token_table; // vocab x d
  Parameter* text_cls;    // 1 x d
  Parameter* text_pos;    // (m_max+1) x d

  static EmbeddingParams create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
};

/// Flattens non-overlapping p x p patches in raster order into rows of
/// length p*p*3 (row-major within the patch, channels innermost).
Matrix patchify(const Image& image, int patch);

/// Builds the visual and text streams; `latents` is left empty.
EmbeddingSet embed_inputs(ad::Tape& tape, const Image& image, std::span<const int> token_ids,
                          const EmbeddingParams& params, const ModelConfig& cfg);

}  // namespace lvg

#pragma once

#include <optional>
#include <vector>

#include "lvg/model.hpp"
#include "lvg/types.hpp"

namespace lvg {

struct PredictionOutput {
  Matrix prob_map;                        // feature_h x feature_w, fused
  std::vector<Matrix> per_expression_maps;  // N+1 grids, text first
  Mask mask;                              // image resolution
  std::optional<Box> box;
  std::optional<Real> empty_logit;        // GRES only
  std::optional<bool> empty_decision;
};

/// Binarizes `prob_map` at `threshold` (p >= threshold is foreground) and
/// resizes to out_h x out_w by nearest neighbour.
Mask mask_from_probmap(const Matrix& prob_map, Real threshold, int out_h, int out_w);

/// Alternative resize: bilinear interpolation at pixel centres, then the
/// threshold.
Mask mask_from_probmap_bilinear(const Matrix& prob_map, Real threshold, int out_h, int out_w);

/// Tight inclusive box around the foreground, nullopt for an empty mask.
std::optional<Box> box_from_mask(const Mask& mask);

/// Rasterizes an inclusive box into a height x width mask.
Mask mask_from_box(const Box& box, int height, int width);

/// Inference: no dropout, no Gumbel noise, no gradient recording.
PredictionOutput predict(const LatentVG& model, const SceneSample& sample);

}  // namespace lvg

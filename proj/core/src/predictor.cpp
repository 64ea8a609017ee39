#include "lvg/predictor.hpp"

#include <algorithm>

namespace lvg {

namespace {

Matrix as_grid(const Matrix& column, int h, int w) {
  return Eigen::Map<const Matrix>(column.data(), h, w);
}

}  // namespace

Mask mask_from_probmap(const Matrix& prob_map, Real threshold, int out_h, int out_w) {
  const Index in_h = prob_map.rows();
  const Index in_w = prob_map.cols();
  Mask out(out_h, out_w);
  if (in_h == 0 || in_w == 0) return out;
  for (int r = 0; r < out_h; ++r) {
    const Index sr = std::min<Index>(in_h - 1, static_cast<Index>(r) * in_h / out_h);
    for (int c = 0; c < out_w; ++c) {
      const Index sc = std::min<Index>(in_w - 1, static_cast<Index>(c) * in_w / out_w);
      out.at(r, c) = prob_map(sr, sc) >= threshold ? 1 : 0;
    }
  }
  return out;
}

Mask mask_from_probmap_bilinear(const Matrix& prob_map, Real threshold, int out_h, int out_w) {
  const Index in_h = prob_map.rows();
  const Index in_w = prob_map.cols();
  Mask out(out_h, out_w);
  if (in_h == 0 || in_w == 0) return out;
  auto source = [](int i, int out_n, Index in_n, Index& lo, Index& hi, Real& t) {
    const Real x = std::clamp((i + 0.5) * static_cast<Real>(in_n) / out_n - 0.5, 0.0,
                              static_cast<Real>(in_n - 1));
    lo = static_cast<Index>(x);
    hi = std::min<Index>(lo + 1, in_n - 1);
    t = x - static_cast<Real>(lo);
  };
  for (int r = 0; r < out_h; ++r) {
    Index r0, r1;
    Real tr;
    source(r, out_h, in_h, r0, r1, tr);
    for (int c = 0; c < out_w; ++c) {
      Index c0, c1;
      Real tc;
      source(c, out_w, in_w, c0, c1, tc);
      const Real top = (1 - tc) * prob_map(r0, c0) + tc * prob_map(r0, c1);
      const Real bottom = (1 - tc) * prob_map(r1, c0) + tc * prob_map(r1, c1);
      out.at(r, c) = (1 - tr) * top + tr * bottom >= threshold ? 1 : 0;
    }
  }
  return out;
}

std::optional<Box> box_from_mask(const Mask& mask) { return tight_box(mask); }

Mask mask_from_box(const Box& box, int height, int width) {
  Mask m(height, width);
  for (int r = std::max(0, box.y_min); r <= std::min(height - 1, box.y_max); ++r) {
    for (int c = std::max(0, box.x_min); c <= std::min(width - 1, box.x_max); ++c) m.at(r, c) = 1;
  }
  return m;
}

PredictionOutput predict(const LatentVG& model, const SceneSample& sample) {
  const ModelConfig& cfg = model.config();
  ad::Tape tape(false);
  Rng unused(0);
  const SampleForward f = model.forward(tape, sample, false, unused);

  PredictionOutput out;
  const int fh = cfg.feature_h();
  const int fw = cfg.feature_w();
  out.prob_map = as_grid(f.maps.prob_map.value(), fh, fw);
  const Matrix& probs = f.maps.expression_probs.value();
  for (Index e = 0; e < probs.cols(); ++e) {
    const Matrix col = probs.col(e);
    out.per_expression_maps.push_back(as_grid(col, fh, fw));
  }
  const int h = sample.image.height;
  const int w = sample.image.width;
  out.mask = cfg.bilinear_resize ? mask_from_probmap_bilinear(out.prob_map, cfg.mask_threshold, h, w)
                                 : mask_from_probmap(out.prob_map, cfg.mask_threshold, h, w);
  if (f.empty) {
    const Real logit = f.empty->logit.value()(0, 0);
    out.empty_logit = logit;
    out.empty_decision = logit > cfg.empty_threshold;
    if (*out.empty_decision) std::fill(out.mask.data.begin(), out.mask.data.end(), 0);
  }
  out.box = box_from_mask(out.mask);
  return out;
}

}  // namespace lvg

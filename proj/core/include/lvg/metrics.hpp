#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lvg/types.hpp"

namespace lvg {

struct Overlap {
  std::size_t intersection = 0;
  std::size_t union_ = 0;
};

/// Pixel intersection and union. Throws ShapeMismatch on differing shapes.
Overlap overlap(const Mask& pred, const Mask& gt);

/// |pred & gt| / |pred | gt|, 1 when both are empty.
Real iou(const Mask& pred, const Mask& gt);

/// IoU of two inclusive pixel boxes.
Real box_iou(const Box& a, const Box& b);

/// One scored prediction.
struct EvalRecord {
  Mask pred;
  Mask gt;
  bool no_target = false;
  std::optional<bool> empty_decision;  // falls back to "pred is empty"
  std::optional<Box> pred_box;
  std::optional<Box> gt_box;
  std::vector<Mask> expression_masks;  // optional, one per expression map
};

struct MetricOptions {
  bool include_no_target = false;  // score no-target samples in the IoU metrics too
};

struct MetricReport {
  Real miou = 0;
  Real oiou = 0;
  std::map<Real, Real> prec_at;  // keys 0.5, 0.7, 0.9
  Real rec_acc = 0;
  std::optional<Real> n_acc;
  std::size_t sample_count = 0;
  std::size_t scored_count = 0;     // samples entering mIoU/oIoU
  std::vector<Real> expression_miou;  // text first, then each latent expression

  /// `key = value` lines, stable ordering.
  std::string to_text() const;
  /// One human-readable line.
  std::string summary() const;
};

inline constexpr Real kPrecThresholds[] = {0.5, 0.7, 0.9};

/// Throws EmptyEvaluation for an empty record list.
MetricReport aggregate(std::span<const EvalRecord> records, const MetricOptions& opts = {});

}  // namespace lvg

#include "lvg/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace lvg {

namespace {

std::string fmt(Real v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Overlap overlap(const Mask& pred, const Mask& gt) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw ShapeMismatch("iou: " + shape_str(pred.height, pred.width) + " vs " +
                        shape_str(gt.height, gt.width));
  }
  Overlap o;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const bool a = pred.data[i] != 0;
    const bool b = gt.data[i] != 0;
    o.intersection += a && b;
    o.union_ += a || b;
  }
  return o;
}

Real iou(const Mask& pred, const Mask& gt) {
  const Overlap o = overlap(pred, gt);
  if (o.union_ == 0) return 1.0;
  return static_cast<Real>(o.intersection) / static_cast<Real>(o.union_);
}

Real box_iou(const Box& a, const Box& b) {
  const int w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min) + 1;
  const int h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min) + 1;
  const long inter = (w > 0 && h > 0) ? static_cast<long>(w) * h : 0;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<Real>(inter) / static_cast<Real>(uni) : 0.0;
}

MetricReport aggregate(std::span<const EvalRecord> records, const MetricOptions& opts) {
  if (records.empty()) throw EmptyEvaluation("no samples to evaluate");
  MetricReport rep;
  rep.sample_count = records.size();
  for (Real t : kPrecThresholds) rep.prec_at[t] = 0;

  std::size_t total_i = 0;
  std::size_t total_u = 0;
  Real iou_sum = 0;
  Real rec_hits = 0;
  std::size_t nt_total = 0;
  std::size_t nt_hits = 0;
  std::size_t n_expr = 0;
  for (const auto& r : records) n_expr = std::max(n_expr, r.expression_masks.size());
  std::vector<Real> expr_sum(n_expr, 0.0);

  for (const auto& r : records) {
    if (r.no_target) {
      ++nt_total;
      if (r.empty_decision.value_or(r.pred.empty())) ++nt_hits;
      if (!opts.include_no_target) continue;
    }
    const Overlap o = overlap(r.pred, r.gt);
    const Real s = o.union_ == 0 ? 1.0
                                 : static_cast<Real>(o.intersection) / static_cast<Real>(o.union_);
    ++rep.scored_count;
    total_i += o.intersection;
    total_u += o.union_;
    iou_sum += s;
    for (Real t : kPrecThresholds) {
      if (s > t) rep.prec_at[t] += 1;
    }
    Real b = 0;
    if (r.pred_box && r.gt_box) {
      b = box_iou(*r.pred_box, *r.gt_box);
    } else if (!r.pred_box && !r.gt_box) {
      b = 1;
    }
    if (b > 0.5) rec_hits += 1;
    for (std::size_t e = 0; e < r.expression_masks.size(); ++e) {
      expr_sum[e] += iou(r.expression_masks[e], r.gt);
    }
  }

  if (rep.scored_count > 0) {
    const Real n = static_cast<Real>(rep.scored_count);
    rep.miou = iou_sum / n;
    rep.oiou = total_u == 0 ? 1.0 : static_cast<Real>(total_i) / static_cast<Real>(total_u);
    for (auto& [t, v] : rep.prec_at) v /= n;
    rep.rec_acc = rec_hits / n;
    for (Real v : expr_sum) rep.expression_miou.push_back(v / n);
  }
  if (nt_total > 0) rep.n_acc = static_cast<Real>(nt_hits) / static_cast<Real>(nt_total);
  return rep;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os << "samples = " << sample_count << "\n";
  os << "scored = " << scored_count << "\n";
  os << "miou = " << fmt(miou) << "\n";
  os << "oiou = " << fmt(oiou) << "\n";
  for (const auto& [t, v] : prec_at) {
    os << "prec@" << static_cast<int>(t * 100 + 0.5) << " = " << fmt(v) << "\n";
  }
  os << "rec_acc = " << fmt(rec_acc) << "\n";
  if (n_acc) os << "n_acc = " << fmt(*n_acc) << "\n";
  for (std::size_t e = 0; e < expression_miou.size(); ++e) {
    os << "expr" << e << "_miou = " << fmt(expression_miou[e]) << "\n";
  }
  return os.str();
}

std::string MetricReport::summary() const {
  auto pct = [](Real v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "mIoU " << pct(miou) << "  oIoU " << pct(oiou);
  for (const auto& [t, v] : prec_at) os << "  P@" << static_cast<int>(t * 100 + 0.5) << " " << pct(v);
  os << "  REC " << pct(rec_acc);
  if (n_acc) os << "  N-acc " << pct(*n_acc);
  os << "  (" << sample_count << " samples)";
  return os.str();
}

}  // namespace lvg

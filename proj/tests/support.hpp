#pragma once

// Shared fixtures and brute-force reference implementations. The references
// use plain loops over std::vector so they share no code with the library
// beyond the data containers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/config.hpp"
#include "lvg/metrics.hpp"
#include "lvg/model.hpp"
#include "lvg/rng.hpp"
#include "lvg/types.hpp"

namespace lvg::testing {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const Matrix& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) g[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  }
  return g;
}

inline double max_abs_diff(const Matrix& a, const Grid& b) {
  double worst = 0;
  if (static_cast<std::size_t>(a.rows()) != b.size()) return std::numeric_limits<double>::infinity();
  for (Index r = 0; r < a.rows(); ++r) {
    const auto& row = b[static_cast<std::size_t>(r)];
    if (static_cast<std::size_t>(a.cols()) != row.size()) return std::numeric_limits<double>::infinity();
    for (Index c = 0; c < a.cols(); ++c) worst = std::max(worst, std::abs(a(r, c) - row[static_cast<std::size_t>(c)]));
  }
  return worst;
}

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

/// Smallest configuration that still exercises every mechanism:
/// 32x32 images in 8px patches give a 4x4 grid of 16 patches.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn_hidden = 16;
  c.patch = 8;
  c.image_h = 32;
  c.image_w = 32;
  c.vocab_size = 16;
  c.m_max = 6;
  c.k_list = {2, 3};
  c.p_drop_list = {0.2, 0.15};
  c.num_concepts = 6;
  c.validate();
  return c;
}

inline SceneSample random_sample(const ModelConfig& cfg, Rng& rng, int tokens, std::uint64_t id = 0) {
  SceneSample s;
  s.id = id;
  s.image = Image(cfg.image_h, cfg.image_w);
  for (float& v : s.image.pixels) v = static_cast<float>(rng.uniform());
  for (int i = 0; i < tokens; ++i) s.token_ids.push_back(rng.uniform_int(0, cfg.vocab_size - 1));
  s.gt_mask = Mask(cfg.image_h, cfg.image_w);
  const int r0 = rng.uniform_int(0, cfg.image_h / 2);
  const int c0 = rng.uniform_int(0, cfg.image_w / 2);
  for (int r = r0; r < r0 + cfg.image_h / 3; ++r) {
    for (int c = c0; c < c0 + cfg.image_w / 3; ++c) s.gt_mask.at(r, c) = 1;
  }
  s.gt_box = tight_box(s.gt_mask);
  return s;
}

// ------------------------------------------------------------- references

inline double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Token dropout followed by the length transform, drawing one Bernoulli
/// per row in row order (the same stream the library consumes).
inline Grid dropout_length_ref(const Grid& tokens, const Grid& phi, double p, Rng& rng) {
  const std::size_t m = tokens.size();
  const std::size_t d = tokens.empty() ? 0 : tokens[0].size();
  std::vector<double> keep(m);
  for (auto& k : keep) k = rng.bernoulli(p) ? 0.0 : 1.0;
  Grid out(phi.size(), std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < phi.size(); ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < d; ++c) out[i][c] += phi[i][j] * keep[j] * tokens[j][c];
    }
  }
  return out;
}

/// Patches scoring at least the mean against the text class token.
inline std::vector<std::size_t> target_patches_ref(const Grid& patches, const std::vector<double>& cls) {
  std::vector<double> score(patches.size(), 0.0);
  double mean = 0;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    for (std::size_t c = 0; c < cls.size(); ++c) score[i] += patches[i][c] * cls[c];
    mean += score[i];
  }
  mean /= static_cast<double>(patches.size());
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < patches.size(); ++i) {
    if (score[i] >= mean) idx.push_back(i);
  }
  return idx;
}

struct RetrievalRef {
  Grid weights;   // N_c x N_tr, softmax over each row
  Grid concepts;  // N_c x d
};

inline RetrievalRef retrieval_ref(const Grid& concepts, const Grid& targets) {
  RetrievalRef out;
  const std::size_t d = concepts[0].size();
  for (const auto& c : concepts) {
    std::vector<double> s(targets.size(), 0.0);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      for (std::size_t k = 0; k < d; ++k) s[j] += c[k] * targets[j][k];
    }
    const double mx = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (auto& v : s) z += (v = std::exp(v - mx));
    for (auto& v : s) v /= z;
    std::vector<double> vc(d, 0.0);
    for (std::size_t j = 0; j < targets.size(); ++j) {
      for (std::size_t k = 0; k < d; ++k) vc[k] += s[j] * targets[j][k];
    }
    out.weights.push_back(s);
    out.concepts.push_back(vc);
  }
  return out;
}

struct InjectionRef {
  Grid weights;   // N_a x N_c, softmax over each column
  Grid injected;  // N_a x d
};

inline InjectionRef injection_ref(const Grid& attrs, const Grid& concepts) {
  const std::size_t na = attrs.size();
  const std::size_t nc = concepts.size();
  const std::size_t d = concepts[0].size();
  InjectionRef out;
  out.weights.assign(na, std::vector<double>(nc, 0.0));
  for (std::size_t c = 0; c < nc; ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < na; ++a) {
      double s = 0;
      for (std::size_t k = 0; k < d; ++k) s += attrs[a][k] * concepts[c][k];
      out.weights[a][c] = s;
      mx = std::max(mx, s);
    }
    double z = 0;
    for (std::size_t a = 0; a < na; ++a) z += (out.weights[a][c] = std::exp(out.weights[a][c] - mx));
    for (std::size_t a = 0; a < na; ++a) out.weights[a][c] /= z;
  }
  out.injected.assign(na, std::vector<double>(d, 0.0));
  for (std::size_t a = 0; a < na; ++a) {
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t k = 0; k < d; ++k) out.injected[a][k] += out.weights[a][c] * concepts[c][k];
    }
  }
  return out;
}

/// -(1/N) sum_i log( exp(min(1, g + s_i)/t) / sum_k exp(n_ik/t) ).
inline double contrastive_ref(const std::vector<double>& pos, const Grid& neg, double gamma, double tau) {
  double total = 0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double denom = 0;
    for (double s : neg[i]) denom += std::exp(s / tau);
    total += std::log(std::exp(std::min(1.0, gamma + pos[i]) / tau) / denom);
  }
  return -total / static_cast<double>(pos.size());
}

/// Mean over projections of sigmoid(feature . projection), per pixel.
inline std::vector<double> fused_map_ref(const Grid& features, const Grid& projections) {
  std::vector<double> out(features.size(), 0.0);
  for (std::size_t p = 0; p < features.size(); ++p) {
    for (const auto& o : projections) {
      double dot = 0;
      for (std::size_t k = 0; k < o.size(); ++k) dot += features[p][k] * o[k];
      out[p] += sigmoid_ref(dot);
    }
    out[p] /= static_cast<double>(projections.size());
  }
  return out;
}

struct SegRef {
  double bce;
  double dice;
};

inline SegRef segmentation_ref(const std::vector<double>& p, const std::vector<double>& g) {
  double bce = 0, inter = 0, sp = 0, sg = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    bce -= g[i] * std::log(p[i]) + (1 - g[i]) * std::log(1 - p[i]);
    inter += p[i] * g[i];
    sp += p[i];
    sg += g[i];
  }
  return {bce / static_cast<double>(p.size()), 1.0 - (2 * inter + 1) / (sp + sg + 1)};
}

struct AggregateRef {
  double miou, oiou, p50, p70, p90, n_acc;
};

/// Per-pixel tallies over whole masks; no-target samples count only
/// toward N-acc.
inline AggregateRef aggregate_ref(const std::vector<EvalRecord>& recs) {
  double iou_sum = 0, ti = 0, tu = 0, p50 = 0, p70 = 0, p90 = 0, nt = 0, nt_hit = 0, scored = 0;
  for (const auto& r : recs) {
    if (r.no_target) {
      nt += 1;
      bool pred_empty = true;
      for (auto v : r.pred.data) pred_empty = pred_empty && v == 0;
      if (r.empty_decision.value_or(pred_empty)) nt_hit += 1;
      continue;
    }
    double i = 0, u = 0;
    for (std::size_t k = 0; k < r.pred.data.size(); ++k) {
      i += (r.pred.data[k] && r.gt.data[k]) ? 1 : 0;
      u += (r.pred.data[k] || r.gt.data[k]) ? 1 : 0;
    }
    const double s = u == 0 ? 1.0 : i / u;
    iou_sum += s;
    ti += i;
    tu += u;
    p50 += s > 0.5;
    p70 += s > 0.7;
    p90 += s > 0.9;
    scored += 1;
  }
  return {iou_sum / scored, tu == 0 ? 1.0 : ti / tu, p50 / scored, p70 / scored, p90 / scored,
          nt == 0 ? -1.0 : nt_hit / nt};
}

// ------------------------------------------------------ finite differences

/// Central difference of `f` with respect to every scalar of `p`.
inline Matrix numeric_grad(Parameter& p, const std::function<double()>& f, double h = 1e-5) {
  Matrix g(p.value.rows(), p.value.cols());
  for (Index i = 0; i < p.value.size(); ++i) {
    const double keep = p.value.data()[i];
    p.value.data()[i] = keep + h;
    const double up = f();
    p.value.data()[i] = keep - h;
    const double down = f();
    p.value.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace lvg::testing

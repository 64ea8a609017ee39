#pragma once

#include <span>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/config.hpp"
#include "lvg/embedding.hpp"
#include "lvg/encoder.hpp"
#include "lvg/parameters.hpp"
#include "lvg/types.hpp"

namespace lvg {

/// MLPs mapping final class tokens into the comparison space.
struct ProjectionHeads {
  FeedForwardParams text_head;
  FeedForwardParams latent_head;  // unset without latent expressions

  static ProjectionHeads create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  ad::Var project_text(ad::Tape& tape, const ad::Var& cls) const;
  ad::Var project_latent(ad::Tape& tape, const ad::Var& cls) const;
};

/// Stride-2 transposed convolutions (kernel 2) lifting the patch grid to
/// stride 4.
struct SegmentationHead {
  struct Stage {
    Parameter* weight;  // d x 4d, columns grouped by sub-pixel
    Parameter* bias;    // 1 x d
  };
  std::vector<Stage> stages;

  static SegmentationHead create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
};

/// Learned empty token read out through single-head cross-attention.
struct EmptyHead {
  Parameter* token;
  Parameter* wq;
  Parameter* wk;
  Parameter* wv;
  Parameter* classifier_w;  // d x 1
  Parameter* classifier_b;  // 1 x 1

  static EmptyHead create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
};

struct LossReport {
  Real total = 0;
  Real pos_cont = 0;
  Real bce = 0;
  Real dice = 0;
  Real gres_bce = 0;
  /// Per sample, cosine similarity of each latent projection to the text
  /// projection.
  std::vector<std::vector<Real>> similarities;
};

/// Cosine similarities between every row of `a` and every row of `b`.
ad::Var cosine_matrix(const ad::Var& a, const ad::Var& b);

/// Margin-capped contrastive objective for one anchor.
///   positives: N x 1 cosine similarities s_i
///   negatives: N x K, row i holds the similarities of negative set i
/// Returns -(1/N) sum_i [ min(1, gamma + s_i)/tau - logsumexp_k(s_k/tau) ].
ad::Var positive_margin_contrastive(const ad::Var& positives, const ad::Var& negatives,
                                   Real gamma, Real tau);

/// Contrastive loss averaged over a batch. Negatives for sample b are the
/// latent projections of every other sample (plus their text projections
/// when `text_negatives`).
ad::Var batch_contrastive(std::span<const ad::Var> text_proj, std::span<const ad::Var> latent_proj,
                          const ModelConfig& cfg, std::vector<std::vector<Real>>* similarities);

/// Patch rows (n x d, raster order) to a stride-4 feature grid
/// (feature_h * feature_w) x d.
ad::Var upsample_features(const ad::Var& patch_rows, const SegmentationHead& head,
                          const ModelConfig& cfg);

struct FusedMaps {
  ad::Var expression_probs;  // P x (N+1), sigmoid of each similarity map
  ad::Var prob_map;          // P x 1, their mean
};

/// Averages sigmoid(scale * F . o) over the text projection and every latent
/// projection (rows of `projections`).
FusedMaps fuse_probability_maps(const ad::Var& features, const ad::Var& projections,
                                Real scale = 1.0);

struct SegmentationLoss {
  ad::Var bce;
  ad::Var dice;
};

inline constexpr Real kDiceSmooth = 1.0;

SegmentationLoss segmentation_loss(const ad::Var& prob_map, const Matrix& target);

/// Nearest-neighbour resample of a mask onto an out_h x out_w grid, as a
/// column of (out_h*out_w) 0/1 values.
Matrix downsample_mask(const Mask& mask, int out_h, int out_w);

struct EmptyPrediction {
  ad::Var logit;  // 1 x 1
  ad::Var bce;    // 1 x 1
};

/// Throws DisabledFeature unless the no-target extension is enabled.
EmptyPrediction gres_no_target_loss(const EmbeddingSet& encoded, const EmptyHead& head,
                                    bool no_target, const ModelConfig& cfg);

}  // namespace lvg

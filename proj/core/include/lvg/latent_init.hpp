#pragma once

#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/config.hpp"
#include "lvg/parameters.hpp"
#include "lvg/rng.hpp"

namespace lvg {

/// The subject token picked from the text and the weights that picked it.
struct SubjectSelection {
  Index index = 0;        // position among the m word tokens (0-based)
  Matrix hard_weights;    // 1 x m one-hot
  Matrix soft_weights;    // 1 x m, sums to 1
  ad::Var weights;        // forward weights used to form `subject`
  ad::Var subject;        // 1 x d
};

struct LatentParams {
  Parameter* selector_w = nullptr;  // d x 1
  Parameter* selector_b = nullptr;  // 1 x 1
  std::vector<Parameter*> phi;         // k_i x m_max length transforms
  std::vector<Parameter*> latent_cls;  // 1 x d per expression
  std::vector<Parameter*> attr_pos;    // k_i x d per expression

  /// Registers nothing when the config has no latent expressions.
  static LatentParams create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
};

struct LatentInit {
  std::vector<ad::Var> latents;  // N matrices of (k_i+2) x d
  SubjectSelection subject;
};

/// Zeroes each token row with probability p in training; identity otherwise.
/// With `elementwise`, entries are dropped independently instead of rows.
ad::Var semantic_dropout(const ad::Var& tokens, double p, bool training, Rng& rng,
                         bool elementwise = false);

/// phi restricted to its leading m columns, times the m x d tokens.
ad::Var length_transform(const ad::Var& tokens, const ad::Var& phi);

/// Linear scoring of each token, optional Gumbel perturbation, then a
/// straight-through one-hot choice (or the soft weights when `soft`).
SubjectSelection select_subject(const ad::Var& tokens, const ad::Var& selector_w,
                                const ad::Var& selector_b, double temperature, bool training,
                                bool soft, Rng& rng);

/// Builds [z_cls; s; phi_i(D_i * T) + attr_pos_i] for every expression.
/// `text_stream` includes the class row, which is excluded from selection.
LatentInit build_latent_expressions(const ad::Var& text_stream, const LatentParams& params,
                                    const ModelConfig& cfg, bool training, Rng& rng);

/// Row 0 of the visual stream replaced by the subject token.
ad::Var install_visual_subject(const ad::Var& visual, const ad::Var& subject);

}  // namespace lvg

#pragma once

#include <span>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/config.hpp"
#include "lvg/parameters.hpp"

namespace lvg {

/// Learned concept tokens C (N_c x d), orthogonally initialized. One bank
/// shared by all layers, or one per layer with `per_layer_concepts`.
struct ConceptBank {
  std::vector<Parameter*> banks;

  static ConceptBank create(ParameterStore& store, const ModelConfig& cfg, Rng& rng);
  Parameter& for_layer(int layer) const;
};

struct TargetSelection {
  ad::Var patches;               // N_tr x d
  std::vector<Index> indices;    // rows of the input patch matrix
  ColVector scores;              // n similarity scores
  Real threshold = 0;            // mean score
};

/// Keeps the patches whose score against the text class token reaches the
/// mean score. Never empty: the maximum always clears the mean.
TargetSelection select_target_patches(const ad::Var& patches, const ad::Var& text_cls);

struct ConceptRetrieval {
  ad::Var visual_concepts;  // N_c x d
  ad::Var weights;          // N_c x N_tr, rows sum to 1
};

/// Each concept becomes a softmax-weighted mean of the target patches.
ConceptRetrieval retrieve_visual_concepts(const ad::Var& concepts, const ad::Var& target_patches);

struct ConceptInjection {
  std::vector<ad::Var> increments;  // per expression, k_i x d
  ad::Var weights;                  // N_a x N_c, columns sum to 1
};

/// Slot-style injection: attention over the concatenated attribute tokens
/// normalized across attributes, so attributes compete for each concept.
ConceptInjection inject_concepts(std::span<const ad::Var> attributes,
                                 const ad::Var& visual_concepts);

/// Per-layer record of what the injector did.
struct InjectionTrace {
  std::vector<Index> target_indices;
  Matrix concept_weights;  // W
  Matrix slot_weights;     // W~
};

/// Full injector step on the latent expressions: select, retrieve, inject,
/// and write back the attribute rows. Class and subject rows pass through.
std::vector<ad::Var> run_concept_injector(std::span<const ad::Var> latents,
                                          const ad::Var& visual, const ad::Var& textual,
                                          const ad::Var& concepts, bool residual,
                                          InjectionTrace* trace = nullptr);

}  // namespace lvg

#pragma once

#include <optional>
#include <span>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/concept_injector.hpp"
#include "lvg/config.hpp"
#include "lvg/embedding.hpp"
#include "lvg/encoder.hpp"
#include "lvg/latent_init.hpp"
#include "lvg/objectives.hpp"
#include "lvg/parameters.hpp"
#include "lvg/rng.hpp"
#include "lvg/types.hpp"

namespace lvg {

/// Everything one forward pass produces for a single sample.
struct SampleForward {
  EmbeddingSet initial;                     // streams entering the encoder
  EncoderOutput encoded;
  std::optional<SubjectSelection> subject;  // absent without latent expressions
  ad::Var text_proj;                        // 1 x d
  ad::Var latent_proj;                      // N x d, invalid when N == 0
  ad::Var features;                         // P x d stride-4 grid
  FusedMaps maps;
  std::optional<EmptyPrediction> empty;
};

struct BatchLoss {
  ad::Var total;
  LossReport report;
  std::vector<SampleForward> forwards;
};

/// The full grounding model: parameters plus the forward/loss composition.
class LatentVG {
 public:
  /// Validates the config and initializes every parameter from `init_seed`.
  LatentVG(ModelConfig cfg, std::uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }

  const EmbeddingParams& embedding() const { return embed_; }
  const LatentParams& latent() const { return latent_; }
  std::span<const EncoderLayerParams> layers() const { return layers_; }
  const ConceptBank& concepts() const { return bank_; }
  const ProjectionHeads& heads() const { return heads_; }
  const SegmentationHead& seg_head() const { return seg_; }
  const EmptyHead& empty_head() const { return empty_; }

  /// `training` enables token dropout and Gumbel noise (drawn from `rng`).
  SampleForward forward(ad::Tape& tape, const SceneSample& sample, bool training, Rng& rng,
                        bool collect_traces = false) const;

  /// Contrastive + weighted BCE/Dice (+ weighted no-target BCE) over a batch.
  BatchLoss total_loss(ad::Tape& tape, std::span<const SceneSample* const> batch, bool training,
                       Rng& rng) const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  EmbeddingParams embed_{};
  LatentParams latent_;
  std::vector<EncoderLayerParams> layers_;
  ConceptBank bank_;
  ProjectionHeads heads_{};
  SegmentationHead seg_;
  EmptyHead empty_{};
};

}  // namespace lvg

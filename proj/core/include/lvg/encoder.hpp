#pragma once

#include <memory>
#include <span>
#include <vector>

#include "lvg/autodiff.hpp"
#include "lvg/concept_injector.hpp"
#include "lvg/config.hpp"
#include "lvg/embedding.hpp"
#include "lvg/parameters.hpp"

namespace lvg {

struct FeedForwardParams {
  Parameter* w1;
  Parameter* b1;
  Parameter* w2;
  Parameter* b2;
};

struct NormParams {
  Parameter* gain;
  Parameter* bias;
};

/// One shared-attention layer with per-modality experts.
struct EncoderLayerParams {
  int heads = 1;
  NormParams attn_norm;
  Parameter* wq;
  Parameter* wk;
  Parameter* wv;
  Parameter* wo;
  Parameter* bq;
  Parameter* bk;
  Parameter* bv;
  Parameter* bo;
  NormParams visual_norm;
  NormParams text_norm;
  FeedForwardParams ffn_visual;
  FeedForwardParams ffn_text;
  std::vector<NormParams> latent_norms;
  std::vector<Parameter*> latent_w;  // d x d per expression
  std::vector<Parameter*> latent_b;

  static EncoderLayerParams create(ParameterStore& store, const ModelConfig& cfg, int layer,
                                   Rng& rng);
};

/// Total rows of the concatenation [V, T, Z^1..Z^N].
Index stream_rows(const EmbeddingSet& e);

struct AttentionOutput {
  EmbeddingSet embeds;
  std::shared_ptr<std::vector<Matrix>> probs;  // per head, rows x rows
};

/// Joint multi-head attention over all streams followed by the output
/// projection; no normalization or residual. `key_mask` covers the
/// concatenated rows and may be empty.
AttentionOutput shared_attention(const EmbeddingSet& embeds, const EncoderLayerParams& params,
                                 std::span<const bool> key_mask = {});

/// Residual expert step: visual rows through the visual FFN, text rows
/// through the text FFN, latent expression i through its linear map.
EmbeddingSet apply_experts(const EmbeddingSet& embeds, const EncoderLayerParams& params);

/// Overwrites every latent subject slot with visual row 0. Identity when
/// the distributor is disabled or the no-target extension is on.
EmbeddingSet distribute_subject(const EmbeddingSet& embeds, const ModelConfig& cfg);

struct LayerTrace {
  /// (N+1) x n head-averaged attention from each expression's class token
  /// (text first, then latents) to the visual patches.
  Matrix expression_attention;
  InjectionTrace injection;
  bool injected = false;
};

struct EncoderOutput {
  EmbeddingSet embeds;
  std::vector<LayerTrace> layers;  // filled only when traces are requested
};

/// One full layer: normalized shared attention with residual, experts,
/// subject distribution, concept injection.
EmbeddingSet encoder_layer(const EmbeddingSet& embeds, const EncoderLayerParams& params,
                           const ad::Var* concepts, const ModelConfig& cfg,
                           LayerTrace* trace = nullptr, std::span<const bool> key_mask = {});

EncoderOutput encode(const EmbeddingSet& embeds, std::span<const EncoderLayerParams> layers,
                     const ConceptBank& bank, const ModelConfig& cfg, bool collect_traces = false,
                     std::span<const bool> key_mask = {});

/// Layer- and head-averaged attention from each expression class token to
/// the patches, each row normalized to sum 1 and reshaped to the patch grid.
std::vector<Matrix> average_expression_attention(std::span<const LayerTrace> traces,
                                                 const ModelConfig& cfg);

}  // namespace lvg

#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lvg/tensor.hpp"

namespace lvg {

/// Every architecture, objective and optimizer knob of the model. Parsed from
/// a flat `key = value` file; call validate() after any manual edit.
struct ModelConfig {
  // Architecture
  int d = 64;               // channel dimension
  int layers = 4;           // encoder depth L
  int heads = 4;
  int ffn_hidden = 128;     // hidden width of the visual/text experts
  int patch = 8;            // patch size p in pixels
  int image_h = 64;
  int image_w = 64;
  int vocab_size = 64;
  int m_max = 12;           // maximum text tokens

  // Latent expressions. N is k_list.size(); N == 0 disables them entirely.
  std::vector<int> k_list{4, 10};
  std::vector<double> p_drop_list{0.2, 0.15};
  bool elementwise_dropout = false;  // drop entries instead of whole tokens
  double gumbel_temperature = 1.0;
  bool soft_subject = false;         // soft Gumbel weights on the forward pass

  // Encoder modules
  bool subject_distributor = true;
  bool concept_injector = true;
  int num_concepts = 100;            // N_c
  bool concept_residual = true;      // A <- A + injected, else replace
  bool per_layer_concepts = false;

  // Objectives
  double gamma = 0.2;
  double tau = 1.0;
  double lambda_bce = 2.0;
  double lambda_dice = 0.5;
  bool text_negatives = false;       // also use other samples' t_o as negatives
  bool scaled_similarity = true;     // divide map logits by sqrt(d)

  // Inference
  double mask_threshold = 0.35;
  double empty_threshold = 0.0;      // on the empty logit
  bool bilinear_resize = false;

  // No-target extension
  bool gres_enabled = false;
  double gres_loss_weight = 0.5;

  // Optimization
  double lr = 1e-3;
  double weight_decay = 0.01;
  double grad_clip = 1.0;            // global-norm clip, <= 0 disables
  std::uint64_t seed = 0;

  int latent_count() const { return static_cast<int>(k_list.size()); }
  double similarity_scale() const { return scaled_similarity ? 1.0 / std::sqrt(static_cast<double>(d)) : 1.0; }
  int grid_h() const { return image_h / patch; }
  int grid_w() const { return image_w / patch; }
  int num_patches() const { return grid_h() * grid_w(); }
  /// Number of 2x deconvolution stages from the patch grid to stride 4.
  int upsample_stages() const;
  int feature_h() const { return grid_h() << upsample_stages(); }
  int feature_w() const { return grid_w() << upsample_stages(); }
  int total_attributes() const;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  /// Applies one `key = value` assignment. Unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string to_text() const;

  static ModelConfig parse(const std::string& text);
  static ModelConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace lvg

#include "lvg/objectives.hpp"

#include <string>

namespace lvg {

namespace {

FeedForwardParams make_mlp(ParameterStore& store, const std::string& name, int d, Rng& rng) {
  FeedForwardParams f{};
  f.w1 = &store.add(name + ".w1", d, d);
  f.b1 = &store.add(name + ".b1", 1, d, false);
  f.w2 = &store.add(name + ".w2", d, d);
  f.b2 = &store.add(name + ".b2", 1, d, false);
  init::xavier_uniform(f.w1->value, rng);
  init::xavier_uniform(f.w2->value, rng);
  return f;
}

ad::Var mlp(ad::Tape& tape, const ad::Var& x, const FeedForwardParams& f) {
  const ad::Var h = ad::gelu(
      ad::add_row(ad::matmul(x, tape.parameter(*f.w1)), tape.parameter(*f.b1)));
  return ad::add_row(ad::matmul(h, tape.parameter(*f.w2)), tape.parameter(*f.b2));
}

}  // namespace

ProjectionHeads ProjectionHeads::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  ProjectionHeads h{};
  h.text_head = make_mlp(store, "heads.text", cfg.d, rng);
  if (cfg.latent_count() > 0) h.latent_head = make_mlp(store, "heads.latent", cfg.d, rng);
  return h;
}

ad::Var ProjectionHeads::project_text(ad::Tape& tape, const ad::Var& cls) const {
  return mlp(tape, cls, text_head);
}

ad::Var ProjectionHeads::project_latent(ad::Tape& tape, const ad::Var& cls) const {
  if (latent_head.w1 == nullptr) throw DisabledFeature("model has no latent expressions");
  return mlp(tape, cls, latent_head);
}

SegmentationHead SegmentationHead::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  SegmentationHead h;
  for (int s = 0; s < cfg.upsample_stages(); ++s) {
    const std::string pre = "seg.deconv" + std::to_string(s);
    Stage st{&store.add(pre + ".w", cfg.d, 4 * cfg.d), &store.add(pre + ".b", 1, cfg.d, false)};
    // Glorot bound of a single d -> d sub-kernel.
    Matrix block(cfg.d, cfg.d);
    for (int q = 0; q < 4; ++q) {
      init::xavier_uniform(block, rng);
      st.weight->value.middleCols(q * cfg.d, cfg.d) = block;
    }
    h.stages.push_back(st);
  }
  return h;
}

EmptyHead EmptyHead::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  EmptyHead h{};
  h.token = &store.add("empty.token", 1, cfg.d);
  h.wq = &store.add("empty.wq", cfg.d, cfg.d);
  h.wk = &store.add("empty.wk", cfg.d, cfg.d);
  h.wv = &store.add("empty.wv", cfg.d, cfg.d);
  h.classifier_w = &store.add("empty.classifier_w", cfg.d, 1);
  h.classifier_b = &store.add("empty.classifier_b", 1, 1, false);
  init::normal(h.token->value, rng, 0.02);
  init::xavier_uniform(h.wq->value, rng);
  init::xavier_uniform(h.wk->value, rng);
  init::xavier_uniform(h.wv->value, rng);
  init::xavier_uniform(h.classifier_w->value, rng);
  return h;
}

ad::Var cosine_matrix(const ad::Var& a, const ad::Var& b) {
  return ad::matmul_nt(ad::normalize_rows(a), ad::normalize_rows(b));
}

ad::Var positive_margin_contrastive(const ad::Var& positives, const ad::Var& negatives,
                                   Real gamma, Real tau) {
  if (positives.cols() != 1) throw ShapeMismatch("positives must be N x 1");
  if (negatives.cols() < 1) throw EmptyNegatives("every positive needs at least one negative");
  if (negatives.rows() != positives.rows()) {
    throw ShapeMismatch("negatives need one row per positive");
  }
  const Real n = static_cast<Real>(positives.rows());
  const ad::Var capped = ad::scale(ad::clamp_max(ad::add_scalar(positives, gamma), 1.0), 1.0 / tau);
  const ad::Var normalizer = ad::logsumexp_rows(ad::scale(negatives, 1.0 / tau));
  return ad::scale(ad::sum(ad::sub(capped, normalizer)), -1.0 / n);
}

ad::Var batch_contrastive(std::span<const ad::Var> text_proj, std::span<const ad::Var> latent_proj,
                          const ModelConfig& cfg, std::vector<std::vector<Real>>* similarities) {
  const std::size_t batch = text_proj.size();
  if (batch < 2) throw BatchTooSmall("contrastive loss needs at least 2 samples");
  std::vector<ad::Var> losses;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<ad::Var> negs;
    for (std::size_t o = 0; o < batch; ++o) {
      if (o == b) continue;
      negs.push_back(latent_proj[o]);
      if (cfg.text_negatives) negs.push_back(text_proj[o]);
    }
    const ad::Var pos = ad::transpose(cosine_matrix(text_proj[b], latent_proj[b]));  // N x 1
    const ad::Var neg_row = cosine_matrix(text_proj[b], ad::concat_rows(negs));       // 1 x K
    std::vector<ad::Var> rows(static_cast<std::size_t>(pos.rows()), neg_row);
    const ad::Var neg = rows.size() == 1 ? neg_row : ad::concat_rows(rows);
    losses.push_back(positive_margin_contrastive(pos, neg, cfg.gamma, cfg.tau));
    if (similarities != nullptr) {
      const Matrix& v = pos.value();
      similarities->emplace_back(v.data(), v.data() + v.size());
    }
  }
  return ad::scale(ad::sum(ad::concat_rows(losses)), 1.0 / static_cast<Real>(batch));
}

ad::Var upsample_features(const ad::Var& patch_rows, const SegmentationHead& head,
                          const ModelConfig& cfg) {
  if (patch_rows.rows() != cfg.num_patches()) {
    throw ShapeMismatch("upsample_features: " + std::to_string(patch_rows.rows()) +
                        " rows for a " + shape_str(cfg.grid_h(), cfg.grid_w()) + " grid");
  }
  if (static_cast<int>(head.stages.size()) != cfg.upsample_stages()) {
    throw ShapeMismatch("upsample_features: head has " + std::to_string(head.stages.size()) +
                        " stages, patch size needs " + std::to_string(cfg.upsample_stages()));
  }
  ad::Tape& tape = *patch_rows.tape();
  ad::Var x = patch_rows;
  Index gh = cfg.grid_h();
  Index gw = cfg.grid_w();
  for (const auto& stage : head.stages) {
    const ad::Var y = ad::pixel_shuffle2(ad::matmul(x, tape.parameter(*stage.weight)), gh, gw);
    x = ad::relu(ad::add_row(y, tape.parameter(*stage.bias)));
    gh *= 2;
    gw *= 2;
  }
  return x;
}

FusedMaps fuse_probability_maps(const ad::Var& features, const ad::Var& projections,
                                Real scale) {
  if (features.cols() != projections.cols()) {
    throw ShapeMismatch("fuse_probability_maps: feature width " + std::to_string(features.cols()) +
                        " vs projection width " + std::to_string(projections.cols()));
  }
  ad::Tape& tape = *features.tape();
  FusedMaps out;
  ad::Var logits = ad::matmul_nt(features, projections);
  if (scale != 1.0) logits = ad::scale(logits, scale);
  out.expression_probs = ad::sigmoid(logits);
  const Index k = projections.rows();
  out.prob_map = ad::matmul(out.expression_probs,
                            tape.constant(Matrix::Constant(k, 1, 1.0 / static_cast<Real>(k))));
  return out;
}

SegmentationLoss segmentation_loss(const ad::Var& prob_map, const Matrix& target) {
  if (target.rows() != prob_map.rows() || target.cols() != prob_map.cols()) {
    throw ShapeMismatch("segmentation_loss: target " + shape_str(target.rows(), target.cols()) +
                        " vs map " + shape_str(prob_map.rows(), prob_map.cols()));
  }
  ad::Tape& tape = *prob_map.tape();
  SegmentationLoss out;
  out.bce = ad::bce_mean(prob_map, target);
  const ad::Var g = tape.constant(target);
  const ad::Var inter = ad::add_scalar(ad::scale(ad::sum(ad::hadamard(prob_map, g)), 2.0), kDiceSmooth);
  const ad::Var denom = ad::add_scalar(ad::sum(prob_map), target.sum() + kDiceSmooth);
  out.dice = ad::add_scalar(ad::scale(ad::divide(inter, denom), -1.0), 1.0);
  return out;
}

Matrix downsample_mask(const Mask& mask, int out_h, int out_w) {
  Matrix out(static_cast<Index>(out_h) * out_w, 1);
  for (int r = 0; r < out_h; ++r) {
    const int sr = std::min(mask.height - 1, static_cast<int>((r + 0.5) * mask.height / out_h));
    for (int c = 0; c < out_w; ++c) {
      const int sc = std::min(mask.width - 1, static_cast<int>((c + 0.5) * mask.width / out_w));
      out(r * out_w + c, 0) = mask.at(sr, sc) ? 1.0 : 0.0;
    }
  }
  return out;
}

EmptyPrediction gres_no_target_loss(const EmbeddingSet& encoded, const EmptyHead& head,
                                    bool no_target, const ModelConfig& cfg) {
  if (!cfg.gres_enabled || head.token == nullptr) {
    throw DisabledFeature("no-target prediction requires gres_enabled");
  }
  ad::Tape& tape = *encoded.visual.tape();
  std::vector<ad::Var> parts{encoded.visual, encoded.textual};
  parts.insert(parts.end(), encoded.latents.begin(), encoded.latents.end());
  const ad::Var memory = ad::concat_rows(parts);
  const ad::Var q = ad::matmul(tape.parameter(*head.token), tape.parameter(*head.wq));
  const ad::Var k = ad::matmul(memory, tape.parameter(*head.wk));
  const ad::Var v = ad::matmul(memory, tape.parameter(*head.wv));
  const ad::Var read = ad::attention(q, k, v, 1).output;
  EmptyPrediction out;
  out.logit = ad::add(ad::matmul(read, tape.parameter(*head.classifier_w)),
                      tape.parameter(*head.classifier_b));
  out.bce = ad::bce_with_logits(out.logit, Matrix::Constant(1, 1, no_target ? 1.0 : 0.0));
  return out;
}

}  // namespace lvg

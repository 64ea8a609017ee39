#include "lvg/encoder.hpp"

#include <string>

namespace lvg {

namespace {

NormParams make_norm(ParameterStore& store, const std::string& name, int d) {
  NormParams n{&store.add(name + ".gain", 1, d, false), &store.add(name + ".bias", 1, d, false)};
  init::ones(n.gain->value);
  return n;
}

Parameter* make_linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng) {
  Parameter& p = store.add(name, in, out);
  init::xavier_uniform(p.value, rng);
  return &p;
}

ad::Var linear(ad::Tape& tape, const ad::Var& x, Parameter* w, Parameter* b) {
  return ad::add_row(ad::matmul(x, tape.parameter(*w)), tape.parameter(*b));
}

ad::Var norm(ad::Tape& tape, const ad::Var& x, const NormParams& n) {
  return ad::layer_norm(x, tape.parameter(*n.gain), tape.parameter(*n.bias));
}

ad::Var feed_forward(ad::Tape& tape, const ad::Var& x, const FeedForwardParams& f) {
  return linear(tape, ad::gelu(linear(tape, x, f.w1, f.b1)), f.w2, f.b2);
}

std::vector<ad::Var> all_streams(const EmbeddingSet& e) {
  std::vector<ad::Var> parts{e.visual, e.textual};
  parts.insert(parts.end(), e.latents.begin(), e.latents.end());
  return parts;
}

EmbeddingSet split_streams(const ad::Var& joint, const EmbeddingSet& like) {
  EmbeddingSet out;
  Index off = 0;
  out.visual = ad::slice_rows(joint, off, like.visual.rows());
  off += like.visual.rows();
  out.textual = ad::slice_rows(joint, off, like.textual.rows());
  off += like.textual.rows();
  for (const auto& z : like.latents) {
    out.latents.push_back(ad::slice_rows(joint, off, z.rows()));
    off += z.rows();
  }
  return out;
}

}  // namespace

EncoderLayerParams EncoderLayerParams::create(ParameterStore& store, const ModelConfig& cfg,
                                              int layer, Rng& rng) {
  const std::string pre = "encoder." + std::to_string(layer) + ".";
  const int d = cfg.d;
  EncoderLayerParams p;
  p.heads = cfg.heads;
  p.attn_norm = make_norm(store, pre + "attn_norm", d);
  p.wq = make_linear(store, pre + "wq", d, d, rng);
  p.wk = make_linear(store, pre + "wk", d, d, rng);
  p.wv = make_linear(store, pre + "wv", d, d, rng);
  p.wo = make_linear(store, pre + "wo", d, d, rng);
  p.bq = &store.add(pre + "bq", 1, d, false);
  p.bk = &store.add(pre + "bk", 1, d, false);
  p.bv = &store.add(pre + "bv", 1, d, false);
  p.bo = &store.add(pre + "bo", 1, d, false);
  p.visual_norm = make_norm(store, pre + "visual_norm", d);
  p.text_norm = make_norm(store, pre + "text_norm", d);
  for (auto [ffn, name] : {std::pair{&p.ffn_visual, "ffn_visual"}, std::pair{&p.ffn_text, "ffn_text"}}) {
    ffn->w1 = make_linear(store, pre + name + ".w1", d, cfg.ffn_hidden, rng);
    ffn->b1 = &store.add(pre + name + ".b1", 1, cfg.ffn_hidden, false);
    ffn->w2 = make_linear(store, pre + name + ".w2", cfg.ffn_hidden, d, rng);
    ffn->b2 = &store.add(pre + name + ".b2", 1, d, false);
  }
  for (int i = 0; i < cfg.latent_count(); ++i) {
    const std::string lp = pre + "latent." + std::to_string(i);
    p.latent_norms.push_back(make_norm(store, lp + ".norm", d));
    p.latent_w.push_back(make_linear(store, lp + ".w", d, d, rng));
    p.latent_b.push_back(&store.add(lp + ".b", 1, d, false));
  }
  return p;
}

Index stream_rows(const EmbeddingSet& e) {
  Index n = e.visual.rows() + e.textual.rows();
  for (const auto& z : e.latents) n += z.rows();
  return n;
}

AttentionOutput shared_attention(const EmbeddingSet& embeds, const EncoderLayerParams& params,
                                 std::span<const bool> key_mask) {
  ad::Tape& tape = *embeds.visual.tape();
  const auto parts = all_streams(embeds);
  const ad::Var joint = ad::concat_rows(parts);
  const ad::Var q = linear(tape, joint, params.wq, params.bq);
  const ad::Var k = linear(tape, joint, params.wk, params.bk);
  const ad::Var v = linear(tape, joint, params.wv, params.bv);
  ad::AttentionResult att = ad::attention(q, k, v, params.heads, key_mask);
  const ad::Var out = linear(tape, att.output, params.wo, params.bo);
  return {split_streams(out, embeds), att.probs};
}

EmbeddingSet apply_experts(const EmbeddingSet& embeds, const EncoderLayerParams& params) {
  if (embeds.latents.size() != params.latent_w.size()) {
    throw ShapeMismatch("apply_experts: " + std::to_string(embeds.latents.size()) +
                        " latent streams but " + std::to_string(params.latent_w.size()) +
                        " experts");
  }
  ad::Tape& tape = *embeds.visual.tape();
  EmbeddingSet out;
  out.visual = ad::add(embeds.visual,
                       feed_forward(tape, norm(tape, embeds.visual, params.visual_norm),
                                    params.ffn_visual));
  out.textual = ad::add(embeds.textual,
                        feed_forward(tape, norm(tape, embeds.textual, params.text_norm),
                                     params.ffn_text));
  for (std::size_t i = 0; i < embeds.latents.size(); ++i) {
    const ad::Var& z = embeds.latents[i];
    out.latents.push_back(ad::add(
        z, linear(tape, norm(tape, z, params.latent_norms[i]), params.latent_w[i], params.latent_b[i])));
  }
  return out;
}

EmbeddingSet distribute_subject(const EmbeddingSet& embeds, const ModelConfig& cfg) {
  if (!cfg.subject_distributor || cfg.gres_enabled || embeds.latents.empty()) return embeds;
  EmbeddingSet out = embeds;
  const ad::Var subject = ad::slice_rows(embeds.visual, 0, 1);
  for (auto& z : out.latents) z = ad::replace_row(z, 1, subject);
  return out;
}

EmbeddingSet encoder_layer(const EmbeddingSet& embeds, const EncoderLayerParams& params,
                           const ad::Var* concepts, const ModelConfig& cfg, LayerTrace* trace,
                           std::span<const bool> key_mask) {
  ad::Tape& tape = *embeds.visual.tape();
  EmbeddingSet normed;
  normed.visual = norm(tape, embeds.visual, params.attn_norm);
  normed.textual = norm(tape, embeds.textual, params.attn_norm);
  for (const auto& z : embeds.latents) normed.latents.push_back(norm(tape, z, params.attn_norm));

  AttentionOutput att = shared_attention(normed, params, key_mask);
  EmbeddingSet h;
  h.visual = ad::add(embeds.visual, att.embeds.visual);
  h.textual = ad::add(embeds.textual, att.embeds.textual);
  for (std::size_t i = 0; i < embeds.latents.size(); ++i) {
    h.latents.push_back(ad::add(embeds.latents[i], att.embeds.latents[i]));
  }

  EmbeddingSet out = distribute_subject(apply_experts(h, params), cfg);

  const bool inject = concepts != nullptr && !out.latents.empty();
  if (inject) {
    out.latents = run_concept_injector(out.latents, out.visual, out.textual, *concepts,
                                       cfg.concept_residual, trace ? &trace->injection : nullptr);
  }

  if (trace != nullptr) {
    trace->injected = inject;
    const Index n = embeds.visual.rows() - 1;
    std::vector<Index> cls_rows{embeds.visual.rows()};
    Index off = embeds.visual.rows() + embeds.textual.rows();
    for (const auto& z : embeds.latents) {
      cls_rows.push_back(off);
      off += z.rows();
    }
    Matrix avg = Matrix::Zero(static_cast<Index>(cls_rows.size()), n);
    for (const Matrix& p : *att.probs) {
      for (std::size_t r = 0; r < cls_rows.size(); ++r) {
        avg.row(static_cast<Index>(r)) += p.row(cls_rows[r]).segment(1, n);
      }
    }
    trace->expression_attention = avg / static_cast<Real>(att.probs->size());
  }
  return out;
}

EncoderOutput encode(const EmbeddingSet& embeds, std::span<const EncoderLayerParams> layers,
                     const ConceptBank& bank, const ModelConfig& cfg, bool collect_traces,
                     std::span<const bool> key_mask) {
  ad::Tape& tape = *embeds.visual.tape();
  EncoderOutput out{embeds, {}};
  const bool inject = cfg.concept_injector && !embeds.latents.empty() && !bank.banks.empty();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    ad::Var concepts;
    if (inject) concepts = tape.parameter(bank.for_layer(static_cast<int>(l)));
    LayerTrace trace;
    out.embeds = encoder_layer(out.embeds, layers[l], inject ? &concepts : nullptr, cfg,
                               collect_traces ? &trace : nullptr, key_mask);
    if (collect_traces) out.layers.push_back(std::move(trace));
  }
  return out;
}

std::vector<Matrix> average_expression_attention(std::span<const LayerTrace> traces,
                                                 const ModelConfig& cfg) {
  std::vector<Matrix> grids;
  if (traces.empty()) return grids;
  Matrix total = Matrix::Zero(traces.front().expression_attention.rows(),
                              traces.front().expression_attention.cols());
  for (const auto& t : traces) total += t.expression_attention;
  for (Index r = 0; r < total.rows(); ++r) {
    RowVector row = total.row(r);
    const Real s = row.sum();
    if (s > 0) row /= s;
    grids.push_back(Eigen::Map<const Matrix>(row.data(), cfg.grid_h(), cfg.grid_w()));
  }
  return grids;
}

}  // namespace lvg

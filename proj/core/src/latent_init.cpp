#include "lvg/latent_init.hpp"

#include <string>

namespace lvg {

LatentParams LatentParams::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  LatentParams p;
  if (cfg.latent_count() == 0) return p;
  p.selector_w = &store.add("latent.selector_w", cfg.d, 1);
  p.selector_b = &store.add("latent.selector_b", 1, 1, false);
  init::xavier_uniform(p.selector_w->value, rng);
  for (int i = 0; i < cfg.latent_count(); ++i) {
    const int k = cfg.k_list[static_cast<std::size_t>(i)];
    const std::string pre = "latent." + std::to_string(i) + ".";
    p.phi.push_back(&store.add(pre + "phi", k, cfg.m_max));
    p.latent_cls.push_back(&store.add(pre + "cls", 1, cfg.d));
    p.attr_pos.push_back(&store.add(pre + "attr_pos", k, cfg.d));
    init::xavier_uniform(p.phi.back()->value, rng);
    init::normal(p.latent_cls.back()->value, rng, 0.02);
    init::normal(p.attr_pos.back()->value, rng, 0.02);
  }
  return p;
}

ad::Var semantic_dropout(const ad::Var& tokens, double p, bool training, Rng& rng,
                         bool elementwise) {
  if (!training || p <= 0.0) return tokens;
  if (elementwise) {
    Matrix mask(tokens.rows(), tokens.cols());
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.bernoulli(p) ? 0.0 : 1.0;
    return ad::mask_elements(tokens, mask);
  }
  std::vector<Real> keep(static_cast<std::size_t>(tokens.rows()));
  for (auto& k : keep) k = rng.bernoulli(p) ? 0.0 : 1.0;
  return ad::scale_rows(tokens, keep);
}

ad::Var length_transform(const ad::Var& tokens, const ad::Var& phi) {
  const Index m = tokens.rows();
  if (m < 1) throw ShapeMismatch("length_transform: no tokens");
  if (m > phi.cols()) {
    throw ShapeMismatch("length_transform: " + std::to_string(m) + " tokens exceed phi width " +
                        std::to_string(phi.cols()));
  }
  const ad::Var active = m == phi.cols() ? phi : ad::slice_cols(phi, 0, m);
  return ad::matmul(active, tokens);
}

SubjectSelection select_subject(const ad::Var& tokens, const ad::Var& selector_w,
                                const ad::Var& selector_b, double temperature, bool training,
                                bool soft, Rng& rng) {
  const Index m = tokens.rows();
  if (m < 1) throw ShapeMismatch("select_subject: no tokens");
  ad::Tape& tape = *tokens.tape();

  // 1 x m logits
  ad::Var logits = ad::transpose(ad::matmul(tokens, selector_w));
  logits = ad::add(logits, ad::matmul(selector_b, tape.constant(Matrix::Ones(1, m))));
  if (training) {
    Matrix noise(1, m);
    for (Index j = 0; j < m; ++j) noise(0, j) = rng.gumbel();
    logits = ad::add(logits, tape.constant(std::move(noise)));
  }
  const ad::Var soft_w = ad::softmax_rows(ad::scale(logits, 1.0 / temperature));

  SubjectSelection sel;
  logits.value().row(0).maxCoeff(&sel.index);
  sel.soft_weights = soft_w.value();
  sel.hard_weights = Matrix::Zero(1, m);
  sel.hard_weights(0, sel.index) = 1.0;
  sel.weights = soft ? soft_w : ad::straight_through(sel.hard_weights, soft_w);
  sel.subject = ad::matmul(sel.weights, tokens);
  return sel;
}

LatentInit build_latent_expressions(const ad::Var& text_stream, const LatentParams& params,
                                    const ModelConfig& cfg, bool training, Rng& rng) {
  const Index m = text_stream.rows() - 1;
  if (m < 1) throw ShapeMismatch("latent expressions need at least one word token");
  ad::Tape& tape = *text_stream.tape();
  const ad::Var words = ad::slice_rows(text_stream, 1, m);

  LatentInit out;
  out.subject = select_subject(words, tape.parameter(*params.selector_w),
                               tape.parameter(*params.selector_b), cfg.gumbel_temperature,
                               training, cfg.soft_subject, rng);
  for (int i = 0; i < cfg.latent_count(); ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const ad::Var dropped =
        semantic_dropout(words, cfg.p_drop_list[ui], training, rng, cfg.elementwise_dropout);
    const ad::Var attrs = ad::add(length_transform(dropped, tape.parameter(*params.phi[ui])),
                                  tape.parameter(*params.attr_pos[ui]));
    const ad::Var parts[] = {tape.parameter(*params.latent_cls[ui]), out.subject.subject, attrs};
    out.latents.push_back(ad::concat_rows(parts));
  }
  return out;
}

ad::Var install_visual_subject(const ad::Var& visual, const ad::Var& subject) {
  return ad::replace_row(visual, 0, subject);
}

}  // namespace lvg

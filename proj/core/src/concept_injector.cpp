#include "lvg/concept_injector.hpp"

#include <string>

namespace lvg {

ConceptBank ConceptBank::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  ConceptBank bank;
  if (cfg.latent_count() == 0 || !cfg.concept_injector) return bank;
  const int count = cfg.per_layer_concepts ? std::max(cfg.layers, 1) : 1;
  for (int l = 0; l < count; ++l) {
    const std::string name =
        cfg.per_layer_concepts ? "concepts." + std::to_string(l) : std::string("concepts");
    Parameter& p = store.add(name, cfg.num_concepts, cfg.d);
    init::orthogonal(p.value, rng);
    bank.banks.push_back(&p);
  }
  return bank;
}

Parameter& ConceptBank::for_layer(int layer) const {
  if (banks.empty()) throw DisabledFeature("concept bank not allocated");
  return *banks[banks.size() == 1 ? 0 : static_cast<std::size_t>(layer)];
}

TargetSelection select_target_patches(const ad::Var& patches, const ad::Var& text_cls) {
  if (patches.rows() < 1) throw ShapeMismatch("select_target_patches: no patches");
  if (text_cls.rows() != 1 || text_cls.cols() != patches.cols()) {
    throw ShapeMismatch("select_target_patches: text class must be 1x" +
                        std::to_string(patches.cols()));
  }
  TargetSelection sel;
  sel.scores = patches.value() * text_cls.value().row(0).transpose();
  sel.threshold = sel.scores.mean();
  for (Index i = 0; i < sel.scores.size(); ++i) {
    if (sel.scores(i) >= sel.threshold) sel.indices.push_back(i);
  }
  // Rounding in the mean can leave nothing at or above it when all scores
  // are equal up to the last bit; the maximum is always target-related.
  if (sel.indices.empty()) {
    Index best = 0;
    sel.scores.maxCoeff(&best);
    sel.indices.push_back(best);
  }
  sel.patches = ad::gather_rows(patches, sel.indices);
  return sel;
}

ConceptRetrieval retrieve_visual_concepts(const ad::Var& concepts, const ad::Var& target_patches) {
  if (target_patches.rows() < 1) throw ShapeMismatch("retrieve_visual_concepts: no patches");
  ConceptRetrieval out;
  out.weights = ad::softmax_rows(ad::matmul_nt(concepts, target_patches));
  out.visual_concepts = ad::matmul(out.weights, target_patches);
  return out;
}

ConceptInjection inject_concepts(std::span<const ad::Var> attributes,
                                 const ad::Var& visual_concepts) {
  if (attributes.empty()) throw ShapeMismatch("inject_concepts: no attribute tokens");
  for (const auto& a : attributes) {
    if (a.cols() != visual_concepts.cols()) {
      throw ShapeMismatch("inject_concepts: attribute width " + std::to_string(a.cols()) +
                          " vs concept width " + std::to_string(visual_concepts.cols()));
    }
  }
  const ad::Var all = attributes.size() == 1 ? attributes[0] : ad::concat_rows(attributes);
  ConceptInjection out;
  out.weights = ad::softmax_cols(ad::matmul_nt(all, visual_concepts));
  const ad::Var injected = ad::matmul(out.weights, visual_concepts);
  Index off = 0;
  for (const auto& a : attributes) {
    out.increments.push_back(attributes.size() == 1 ? injected
                                                    : ad::slice_rows(injected, off, a.rows()));
    off += a.rows();
  }
  return out;
}

std::vector<ad::Var> run_concept_injector(std::span<const ad::Var> latents,
                                          const ad::Var& visual, const ad::Var& textual,
                                          const ad::Var& concepts, bool residual,
                                          InjectionTrace* trace) {
  const Index n = visual.rows() - 1;
  const ad::Var patches = ad::slice_rows(visual, 1, n);
  const ad::Var text_cls = ad::slice_rows(textual, 0, 1);
  const TargetSelection target = select_target_patches(patches, text_cls);
  const ConceptRetrieval retrieval = retrieve_visual_concepts(concepts, target.patches);

  std::vector<ad::Var> heads;
  std::vector<ad::Var> attrs;
  for (const auto& z : latents) {
    heads.push_back(ad::slice_rows(z, 0, 2));
    attrs.push_back(ad::slice_rows(z, 2, z.rows() - 2));
  }
  const ConceptInjection injection = inject_concepts(attrs, retrieval.visual_concepts);

  std::vector<ad::Var> out;
  out.reserve(latents.size());
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const ad::Var updated =
        residual ? ad::add(attrs[i], injection.increments[i]) : injection.increments[i];
    const ad::Var parts[] = {heads[i], updated};
    out.push_back(ad::concat_rows(parts));
  }
  if (trace != nullptr) {
    trace->target_indices = target.indices;
    trace->concept_weights = retrieval.weights.value();
    trace->slot_weights = injection.weights.value();
  }
  return out;
}

}  // namespace lvg

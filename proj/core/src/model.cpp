#include "lvg/model.hpp"

namespace lvg {

LatentVG::LatentVG(ModelConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  embed_ = EmbeddingParams::create(store_, cfg_, rng);
  latent_ = LatentParams::create(store_, cfg_, rng);
  for (int l = 0; l < cfg_.layers; ++l) {
    layers_.push_back(EncoderLayerParams::create(store_, cfg_, l, rng));
  }
  bank_ = ConceptBank::create(store_, cfg_, rng);
  heads_ = ProjectionHeads::create(store_, cfg_, rng);
  seg_ = SegmentationHead::create(store_, cfg_, rng);
  if (cfg_.gres_enabled) empty_ = EmptyHead::create(store_, cfg_, rng);
}

SampleForward LatentVG::forward(ad::Tape& tape, const SceneSample& sample, bool training,
                                Rng& rng, bool collect_traces) const {
  SampleForward out;
  EmbeddingSet e = embed_inputs(tape, sample.image, sample.token_ids, embed_, cfg_);
  if (cfg_.latent_count() > 0) {
    LatentInit li = build_latent_expressions(e.textual, latent_, cfg_, training, rng);
    e.visual = install_visual_subject(e.visual, li.subject.subject);
    e.latents = std::move(li.latents);
    out.subject = std::move(li.subject);
  }
  out.initial = e;
  out.encoded = encode(e, layers_, bank_, cfg_, collect_traces);

  const EmbeddingSet& fin = out.encoded.embeds;
  out.text_proj = heads_.project_text(tape, ad::slice_rows(fin.textual, 0, 1));
  std::vector<ad::Var> proj_rows{out.text_proj};
  if (!fin.latents.empty()) {
    std::vector<ad::Var> cls;
    for (const auto& z : fin.latents) cls.push_back(ad::slice_rows(z, 0, 1));
    out.latent_proj = heads_.project_latent(tape, ad::concat_rows(cls));
    proj_rows.push_back(out.latent_proj);
  }
  const Index n = fin.visual.rows() - 1;
  out.features = upsample_features(ad::slice_rows(fin.visual, 1, n), seg_, cfg_);
  out.maps = fuse_probability_maps(out.features, ad::concat_rows(proj_rows), cfg_.similarity_scale());
  if (cfg_.gres_enabled) {
    out.empty = gres_no_target_loss(fin, empty_, sample.no_target, cfg_);
  }
  return out;
}

BatchLoss LatentVG::total_loss(ad::Tape& tape, std::span<const SceneSample* const> batch,
                               bool training, Rng& rng) const {
  if (batch.empty()) throw BatchTooSmall("empty batch");
  const bool contrastive = cfg_.latent_count() > 0;
  if (contrastive && batch.size() < 2) {
    throw BatchTooSmall("contrastive negatives need a batch of at least 2");
  }
  BatchLoss out;
  std::vector<ad::Var> bces;
  std::vector<ad::Var> dices;
  std::vector<ad::Var> empties;
  std::vector<ad::Var> text_proj;
  std::vector<ad::Var> latent_proj;
  for (const SceneSample* s : batch) {
    SampleForward f = forward(tape, *s, training, rng);
    const Matrix target = downsample_mask(s->gt_mask, cfg_.feature_h(), cfg_.feature_w());
    SegmentationLoss seg = segmentation_loss(f.maps.prob_map, target);
    bces.push_back(seg.bce);
    dices.push_back(seg.dice);
    if (f.empty) empties.push_back(f.empty->bce);
    text_proj.push_back(f.text_proj);
    if (contrastive) latent_proj.push_back(f.latent_proj);
    out.forwards.push_back(std::move(f));
  }
  const Real inv_b = 1.0 / static_cast<Real>(batch.size());
  const ad::Var bce = ad::scale(ad::sum(ad::concat_rows(bces)), inv_b);
  const ad::Var dice = ad::scale(ad::sum(ad::concat_rows(dices)), inv_b);
  ad::Var total = ad::add(ad::scale(bce, cfg_.lambda_bce), ad::scale(dice, cfg_.lambda_dice));
  out.report.bce = bce.value()(0, 0);
  out.report.dice = dice.value()(0, 0);
  if (contrastive) {
    const ad::Var pc = batch_contrastive(text_proj, latent_proj, cfg_, &out.report.similarities);
    out.report.pos_cont = pc.value()(0, 0);
    total = ad::add(total, pc);
  }
  if (!empties.empty()) {
    const ad::Var gb = ad::scale(ad::sum(ad::concat_rows(empties)), inv_b);
    out.report.gres_bce = gb.value()(0, 0);
    total = ad::add(total, ad::scale(gb, cfg_.gres_loss_weight));
  }
  out.total = total;
  out.report.total = total.value()(0, 0);
  return out;
}

}  // namespace lvg

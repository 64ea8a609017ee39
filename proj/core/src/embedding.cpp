#include "lvg/embedding.hpp"

namespace lvg {

EmbeddingParams EmbeddingParams::create(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const int patch_dim = cfg.patch * cfg.patch * 3;
  EmbeddingParams p{};
  p.patch_proj = &store.add("embed.patch_proj", patch_dim, cfg.d);
  p.patch_bias = &store.add("embed.patch_bias", 1, cfg.d, false);
  p.visual_cls = &store.add("embed.visual_cls", 1, cfg.d);
  p.visual_pos = &store.add("embed.visual_pos", cfg.num_patches() + 1, cfg.d);
  p.token_table = &store.add("embed.token_table", cfg.vocab_size, cfg.d);
  p.text_cls = &store.add("embed.text_cls", 1, cfg.d);
  p.text_pos = &store.add("embed.text_pos", cfg.m_max + 1, cfg.d);
  init::xavier_uniform(p.patch_proj->value, rng);
  init::normal(p.visual_cls->value, rng, 0.02);
  init::normal(p.visual_pos->value, rng, 0.02);
  init::normal(p.token_table->value, rng, 0.02);
  init::normal(p.text_cls->value, rng, 0.02);
  init::normal(p.text_pos->value, rng, 0.02);
  return p;
}

Matrix patchify(const Image& image, int patch) {
  if (patch <= 0 || image.height % patch != 0 || image.width % patch != 0) {
    throw ShapeMismatch("image " + shape_str(image.height, image.width) +
                        " not divisible into " + std::to_string(patch) + "px patches");
  }
  const int gh = image.height / patch;
  const int gw = image.width / patch;
  Matrix out(gh * gw, patch * patch * 3);
  for (int pr = 0; pr < gh; ++pr) {
    for (int pc = 0; pc < gw; ++pc) {
      Index col = 0;
      for (int r = 0; r < patch; ++r) {
        for (int c = 0; c < patch; ++c) {
          for (int ch = 0; ch < 3; ++ch) {
            out(pr * gw + pc, col++) = image.at(pr * patch + r, pc * patch + c, ch);
          }
        }
      }
    }
  }
  return out;
}

EmbeddingSet embed_inputs(ad::Tape& tape, const Image& image, std::span<const int> token_ids,
                          const EmbeddingParams& params, const ModelConfig& cfg) {
  if (image.height != cfg.image_h || image.width != cfg.image_w) {
    throw ShapeMismatch("image " + shape_str(image.height, image.width) + " but config expects " +
                        shape_str(cfg.image_h, cfg.image_w));
  }
  if (static_cast<int>(token_ids.size()) > cfg.m_max) {
    throw ShapeMismatch(std::to_string(token_ids.size()) + " tokens exceed m_max " +
                        std::to_string(cfg.m_max));
  }
  for (int id : token_ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw VocabOverflow("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(cfg.vocab_size));
    }
  }

  const auto patches = tape.constant(patchify(image, cfg.patch));
  const auto proj = ad::add_row(ad::matmul(patches, tape.parameter(*params.patch_proj)),
                                tape.parameter(*params.patch_bias));
  const ad::Var vis_parts[] = {tape.parameter(*params.visual_cls), proj};
  const auto visual = ad::add(ad::concat_rows(vis_parts), tape.parameter(*params.visual_pos));

  const Index m = static_cast<Index>(token_ids.size());
  const auto pos = ad::slice_rows(tape.parameter(*params.text_pos), 0, m + 1);
  ad::Var textual;
  if (m == 0) {
    textual = ad::add(tape.parameter(*params.text_cls), pos);
  } else {
    std::vector<Index> rows(token_ids.begin(), token_ids.end());
    const ad::Var txt_parts[] = {tape.parameter(*params.text_cls),
                                 ad::gather_rows(tape.parameter(*params.token_table), rows)};
    textual = ad::add(ad::concat_rows(txt_parts), pos);
  }
  return EmbeddingSet{visual, textual, {}};
}

}  // namespace lvg

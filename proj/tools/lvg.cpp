// Command-line front end: dataset generation, training, evaluation,
// prediction export and attention dumps.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lvg/checkpoint.hpp"
#include "lvg/dataset_io.hpp"
#include "lvg/model.hpp"
#include "lvg/predictor.hpp"
#include "lvg/synthetic_data.hpp"
#include "lvg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : lvg::Error {
  using lvg::Error::Error;
};

json report_json(const lvg::MetricReport& r) {
  json j{{"miou", r.miou},       {"oiou", r.oiou},
         {"rec_acc", r.rec_acc}, {"samples", r.sample_count},
         {"scored", r.scored_count}, {"expression_miou", r.expression_miou}};
  for (const auto& [t, v] : r.prec_at) j["prec@" + std::to_string(static_cast<int>(t * 100 + 0.5))] = v;
  if (r.n_acc) j["n_acc"] = *r.n_acc;
  return j;
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw lvg::FormatError("cannot read " + p.string());
  return json::parse(is);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw lvg::FormatError("cannot write " + p.string());
  os << j.dump(2) << "\n";
}

void write_grid(const fs::path& p, const lvg::Matrix& m) {
  std::ofstream os(p);
  if (!os) throw lvg::FormatError("cannot write " + p.string());
  os << "# " << m.rows() << " " << m.cols() << "\n";
  char buf[32];
  for (lvg::Index r = 0; r < m.rows(); ++r) {
    for (lvg::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.8g", m(r, c));
      os << (c ? " " : "") << buf;
    }
    os << "\n";
  }
}

// Input image blended with a red heat layer from a (coarse) grid.
void write_overlay(const fs::path& p, const lvg::Image& img, const lvg::Matrix& grid) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw lvg::FormatError("cannot write " + p.string());
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  const double peak = std::max(grid.maxCoeff(), 1e-12);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double h = grid(y * grid.rows() / img.height, x * grid.cols() / img.width) / peak;
      for (int ch = 0; ch < 3; ++ch) {
        const double heat = ch == 0 ? 1.0 : 0.0;
        const double v = 0.5 * img.at(y, x, ch) + 0.5 * h * heat;
        os.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255)));
      }
    }
  }
}

std::vector<lvg::SceneSample> load_split(const fs::path& data, const std::string& split) {
  const fs::path dir = data / split;
  if (!fs::is_directory(dir)) throw UsageError("no split '" + split + "' under " + data.string());
  return lvg::io::load_split(dir);
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  int count = 2000;
  int val_count = -1;
  int test_count = 0;
  std::uint64_t seed = 0;
  std::string out;
  double no_target_fraction = 0.0;
  std::string no_target_mode = "reserved";
};

int cmd_gen_data(const GenArgs& a) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  lvg::synth::GeneratorOptions opts;
  opts.no_target_fraction = a.no_target_fraction;
  opts.no_target_mode = a.no_target_mode == "absent" ? lvg::synth::NoTargetMode::AbsentColor
                                                     : lvg::synth::NoTargetMode::ReservedColor;
  const fs::path root(a.out);
  fs::create_directories(root);
  const int val = a.val_count < 0 ? a.count / 5 : a.val_count;
  const std::vector<std::pair<std::string, int>> splits{{"train", a.count}, {"val", val}, {"test", a.test_count}};
  lvg::synth::Vocabulary vocab = lvg::synth::Vocabulary::standard();
  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& [name, n] = splits[s];
    if (n <= 0) continue;
    const auto ds = lvg::synth::generate_dataset(n, opts, a.seed, s);
    lvg::io::save_split(root / name, ds.samples);
    std::size_t nt = 0;
    for (const auto& smp : ds.samples) nt += smp.no_target;
    std::cout << name << ": " << n << " samples (" << nt << " no-target)\n";
  }
  vocab.save(lvg::io::vocab_path(root));
  std::cout << "dataset hash " << lvg::io::dataset_hash(root) << "\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
  std::string split = "train";
  std::string eval_split;
  int steps = 3000;
  int batch = 16;
  int checkpoint_every = 0;
  bool gres = false;
  std::string ablate;
  bool quiet = false;
};

void apply_ablation(lvg::ModelConfig& cfg, const std::string& ablate) {
  if (ablate.empty()) return;
  if (ablate == "no-latent") {
    cfg.k_list.clear();
    cfg.p_drop_list.clear();
  } else if (ablate == "no-sd") {
    cfg.subject_distributor = false;
  } else if (ablate == "no-vci") {
    cfg.concept_injector = false;
  } else if (ablate == "no-margin") {
    cfg.gamma = 0.0;
  } else {
    throw UsageError("unknown --ablate value '" + ablate + "'");
  }
}

int cmd_train(const TrainArgs& a) {
  lvg::ModelConfig cfg = a.config.empty() ? lvg::ModelConfig{} : lvg::ModelConfig::load(a.config);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) cfg.seed = *a.seed;
  apply_ablation(cfg, a.ablate);
  if (a.gres) {
    cfg.gres_enabled = true;
    cfg.lr *= 0.5;
  }
  cfg.validate();

  const fs::path data(a.data);
  const auto vocab = lvg::synth::Vocabulary::load(lvg::io::vocab_path(data));
  if (vocab.size() > cfg.vocab_size) {
    throw lvg::ConfigError("dataset vocabulary has " + std::to_string(vocab.size()) +
                           " words, vocab_size is " + std::to_string(cfg.vocab_size));
  }
  const auto samples = load_split(data, a.split);
  const std::string hash = lvg::io::dataset_hash(data);

  const fs::path out(a.out);
  fs::create_directories(out);
  cfg.save(out / "config.txt");

  lvg::LatentVG model(cfg, cfg.seed);
  lvg::TrainOptions opts;
  opts.steps = a.steps;
  opts.batch = a.batch;
  opts.seed = cfg.seed;
  opts.out_dir = out;
  opts.checkpoint_every = a.checkpoint_every;
  const int stride = std::max(1, a.steps / 20);
  opts.on_step = [&](const lvg::StepRecord& r) {
    if (a.quiet || (r.step % stride != 0 && r.step + 1 != a.steps)) return;
    std::printf("step %5d  loss %.4f  bce %.4f  dice %.4f  cont %.4f%s  lr %.2e\n", r.step,
                r.report.total, r.report.bce, r.report.dice, r.report.pos_cont,
                cfg.gres_enabled ? ("  gres " + std::to_string(r.report.gres_bce)).c_str() : "",
                r.lr);
    std::fflush(stdout);
  };
  std::cout << "training " << model.parameters().scalar_count() << " parameters on "
            << samples.size() << " samples\n";
  lvg::train(model, samples, opts);

  json manifest{{"config", cfg.to_text()},
                {"seed", cfg.seed},
                {"data", fs::absolute(data).string()},
                {"split", a.split},
                {"dataset_hash", hash},
                {"checkpoint", fs::absolute(out / "checkpoint.bin").string()},
                {"steps", a.steps},
                {"batch", a.batch},
                {"ablate", a.ablate},
                {"gres", a.gres},
                {"metric_history", json::array()}};
  if (!a.eval_split.empty()) {
    const auto eval_samples = load_split(data, a.eval_split);
    const auto rep = lvg::evaluate(model, eval_samples);
    std::cout << a.eval_split << ": " << rep.summary() << "\n";
    manifest["metric_history"].push_back({{"checkpoint", manifest["checkpoint"]},
                                          {"dataset_hash", hash},
                                          {"split", a.eval_split},
                                          {"metrics", report_json(rep)}});
  }
  write_json(out / "manifest.json", manifest);
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
  bool include_no_target = false;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UsageError("missing checkpoint " + a.checkpoint);
  const auto model = lvg::Checkpoint::load(a.checkpoint).restore();
  const fs::path data(a.data);
  const auto samples = load_split(data, a.split);
  const std::string hash = lvg::io::dataset_hash(data);
  lvg::MetricOptions mo;
  mo.include_no_target = a.include_no_target;
  const auto rep = lvg::evaluate(*model, samples, mo);

  const fs::path ckpt = fs::absolute(a.checkpoint);
  const fs::path out = a.out.empty() ? ckpt.parent_path() / ("eval_" + a.split + ".txt") : fs::path(a.out);
  {
    std::ofstream os(out);
    if (!os) throw lvg::FormatError("cannot write " + out.string());
    os << "checkpoint = " << ckpt.string() << "\n";
    os << "dataset_hash = " << hash << "\n";
    os << "split = " << a.split << "\n";
    os << rep.to_text();
  }
  const fs::path manifest = ckpt.parent_path() / "manifest.json";
  if (fs::exists(manifest)) {
    json m = read_json(manifest);
    m["metric_history"].push_back({{"checkpoint", ckpt.string()},
                                   {"dataset_hash", hash},
                                   {"split", a.split},
                                   {"metrics", report_json(rep)}});
    write_json(manifest, m);
  }
  std::cout << rep.summary() << "\n";
  for (std::size_t e = 0; e < rep.expression_miou.size(); ++e) {
    std::printf("  expression %zu mIoU %.2f\n", e, rep.expression_miou[e] * 100);
  }
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::string out;
};

int cmd_predict(const PredictArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UsageError("missing checkpoint " + a.checkpoint);
  const auto model = lvg::Checkpoint::load(a.checkpoint).restore();
  const auto samples = load_split(a.data, a.split);
  std::ofstream os(a.out);
  if (!os) throw lvg::FormatError("cannot write " + a.out);
  for (const auto& s : samples) {
    const auto p = lvg::predict(*model, s);
    json j{{"id", s.id},
           {"expression", s.expression},
           {"mask", {{"h", p.mask.height}, {"w", p.mask.width}, {"rle", lvg::io::rle_encode(p.mask)}}},
           {"box", p.box ? json::array({p.box->x_min, p.box->y_min, p.box->x_max, p.box->y_max})
                         : json(nullptr)}};
    if (p.empty_logit) {
      j["empty_logit"] = *p.empty_logit;
      j["empty"] = *p.empty_decision;
    }
    os << j.dump() << "\n";
  }
  std::cout << "wrote " << samples.size() << " predictions to " << a.out << "\n";
  return 0;
}

// --------------------------------------------------------------- attn-dump

struct AttnArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  std::uint64_t sample = 0;
  std::string out;
  bool overlay = false;
};

int cmd_attn_dump(const AttnArgs& a) {
  if (!fs::exists(a.checkpoint)) throw UsageError("missing checkpoint " + a.checkpoint);
  const auto model = lvg::Checkpoint::load(a.checkpoint).restore();
  const lvg::ModelConfig& cfg = model->config();
  const auto samples = load_split(a.data, a.split);
  const auto it = std::find_if(samples.begin(), samples.end(),
                               [&](const lvg::SceneSample& s) { return s.id == a.sample; });
  if (it == samples.end()) throw UsageError("no sample " + std::to_string(a.sample) + " in " + a.split);

  lvg::ad::Tape tape(false);
  lvg::Rng unused(0);
  const auto f = model->forward(tape, *it, false, unused, true);
  const fs::path out(a.out);
  fs::create_directories(out);

  const auto grids = lvg::average_expression_attention(f.encoded.layers, cfg);
  for (std::size_t e = 0; e < grids.size(); ++e) {
    write_grid(out / ("expr" + std::to_string(e) + "_attention.grid"), grids[e]);
    if (a.overlay) write_overlay(out / ("expr" + std::to_string(e) + "_overlay.ppm"), it->image, grids[e]);
  }

  for (std::size_t l = 0; l < f.encoded.layers.size(); ++l) {
    const auto& tr = f.encoded.layers[l];
    if (!tr.injected) continue;
    const auto& inj = tr.injection;
    const std::string pre = "layer" + std::to_string(l);
    write_grid(out / (pre + "_slot_weights.grid"), inj.slot_weights);
    // Spatial footprint of each expression: attribute slot weights pushed
    // through the concept-to-patch weights.
    lvg::Index row = 0;
    for (int e = 0; e < cfg.latent_count(); ++e) {
      const int k = cfg.k_list[static_cast<std::size_t>(e)];
      const lvg::RowVector per_target =
          inj.slot_weights.middleRows(row, k).colwise().sum() * inj.concept_weights;
      row += k;
      lvg::Matrix grid = lvg::Matrix::Zero(cfg.grid_h(), cfg.grid_w());
      for (std::size_t j = 0; j < inj.target_indices.size(); ++j) {
        const lvg::Index p = inj.target_indices[j];
        grid(p / cfg.grid_w(), p % cfg.grid_w()) += per_target(static_cast<lvg::Index>(j));
      }
      if (grid.sum() > 0) grid /= grid.sum();
      write_grid(out / (pre + "_expr" + std::to_string(e + 1) + "_concept_map.grid"), grid);
    }
  }
  std::cout << "wrote " << grids.size() << " attention grids for sample " << a.sample << " ("
            << it->expression << ") to " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-expression visual grounding on synthetic scenes"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic referring dataset");
  g->add_option("--count", gen.count, "Training samples")->capture_default_str();
  g->add_option("--val-count", gen.val_count, "Validation samples (default count/5)");
  g->add_option("--test-count", gen.test_count, "Test samples")->capture_default_str();
  g->add_option("--seed", gen.seed, "Generation seed")->capture_default_str();
  g->add_option("--out", gen.out, "Dataset directory")->required();
  g->add_option("--no-target-fraction", gen.no_target_fraction, "Share of no-target samples")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  g->add_option("--no-target-mode", gen.no_target_mode, "reserved | absent")
      ->check(CLI::IsMember({"reserved", "absent"}))
      ->capture_default_str();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", tr.config, "Config file")->check(CLI::ExistingFile);
  t->add_option("--set", tr.overrides, "Config override key=value (repeatable)");
  t->add_option("--seed", tr.seed, "Seed for init, batches and noise");
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--data", tr.data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  t->add_option("--split", tr.split, "Training split")->capture_default_str();
  t->add_option("--eval-split", tr.eval_split, "Evaluate on this split after training");
  t->add_option("--steps", tr.steps, "Optimizer steps")->check(CLI::NonNegativeNumber)->capture_default_str();
  t->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  t->add_option("--checkpoint-every", tr.checkpoint_every, "Intermediate checkpoint stride");
  t->add_flag("--gres", tr.gres, "Enable no-target prediction (halves the learning rate)");
  t->add_option("--ablate", tr.ablate, "no-latent | no-sd | no-vci | no-margin")
      ->check(CLI::IsMember({"no-latent", "no-sd", "no-vci", "no-margin"}));
  t->add_flag("--quiet", tr.quiet, "Suppress progress lines");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a split");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "Split to score")->capture_default_str();
  e->add_option("--out", ev.out, "Report path (default next to the checkpoint)");
  e->add_flag("--include-no-target", ev.include_no_target, "Score no-target samples in IoU metrics");

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "Export per-sample predictions");
  p->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
  p->add_option("--data", pr.data, "Dataset directory")->required();
  p->add_option("--split", pr.split, "Split")->capture_default_str();
  p->add_option("--out", pr.out, "Output JSONL")->required();

  AttnArgs at;
  auto* a = app.add_subcommand("attn-dump", "Dump attention and concept maps for one sample");
  a->add_option("--checkpoint", at.checkpoint, "Checkpoint file")->required();
  a->add_option("--data", at.data, "Dataset directory")->required();
  a->add_option("--split", at.split, "Split")->capture_default_str();
  a->add_option("--sample", at.sample, "Sample id")->required();
  a->add_option("--out", at.out, "Output directory")->required();
  a->add_flag("--overlay", at.overlay, "Also write PPM overlays");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*p) return cmd_predict(pr);
    if (*a) return cmd_attn_dump(at);
  } catch (const UsageError& ex) {
    std::cerr << "usage error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

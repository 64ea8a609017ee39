#include "lvg/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace lvg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

int parse_int(const std::string& key, const std::string& v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + key + "': expected integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

struct Field {
  const char* key;
  std::function<void(ModelConfig&, const std::string&)> set;
  std::function<std::string(const ModelConfig&)> get;
};

#define LVG_INT(name, member)                                                         \
  Field {                                                                             \
    name, [](ModelConfig& c, const std::string& v) { c.member = parse_int(name, v); }, \
        [](const ModelConfig& c) { return std::to_string(c.member); }                 \
  }
#define LVG_DBL(name, member)                                                            \
  Field {                                                                                \
    name, [](ModelConfig& c, const std::string& v) { c.member = parse_double(name, v); }, \
        [](const ModelConfig& c) { return fmt_double(c.member); }                        \
  }
#define LVG_BOOL(name, member)                                                         \
  Field {                                                                              \
    name, [](ModelConfig& c, const std::string& v) { c.member = parse_bool(name, v); }, \
        [](const ModelConfig& c) { return std::string(c.member ? "true" : "false"); }  \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      LVG_INT("d", d),
      LVG_INT("layers", layers),
      LVG_INT("heads", heads),
      LVG_INT("ffn_hidden", ffn_hidden),
      LVG_INT("patch", patch),
      Field{"image_hw",
            [](ModelConfig& c, const std::string& v) {
              const auto parts = split_list(v);
              if (parts.size() == 1) {
                c.image_h = c.image_w = parse_int("image_hw", parts[0]);
              } else if (parts.size() == 2) {
                c.image_h = parse_int("image_hw", parts[0]);
                c.image_w = parse_int("image_hw", parts[1]);
              } else {
                throw ConfigError("'image_hw': expected 'H, W'");
              }
            },
            [](const ModelConfig& c) {
              return std::to_string(c.image_h) + ", " + std::to_string(c.image_w);
            }},
      LVG_INT("vocab_size", vocab_size),
      LVG_INT("m_max", m_max),
      Field{"k_list",
            [](ModelConfig& c, const std::string& v) {
              c.k_list.clear();
              for (const auto& s : split_list(v)) c.k_list.push_back(parse_int("k_list", s));
            },
            [](const ModelConfig& c) { return fmt_list(c.k_list); }},
      Field{"p_drop_list",
            [](ModelConfig& c, const std::string& v) {
              c.p_drop_list.clear();
              for (const auto& s : split_list(v)) {
                c.p_drop_list.push_back(parse_double("p_drop_list", s));
              }
            },
            [](const ModelConfig& c) { return fmt_list(c.p_drop_list); }},
      LVG_BOOL("elementwise_dropout", elementwise_dropout),
      LVG_DBL("gumbel_temperature", gumbel_temperature),
      LVG_BOOL("soft_subject", soft_subject),
      LVG_BOOL("subject_distributor", subject_distributor),
      LVG_BOOL("concept_injector", concept_injector),
      LVG_INT("num_concepts", num_concepts),
      LVG_BOOL("concept_residual", concept_residual),
      LVG_BOOL("per_layer_concepts", per_layer_concepts),
      LVG_DBL("gamma", gamma),
      LVG_DBL("tau", tau),
      LVG_DBL("lambda_bce", lambda_bce),
      LVG_DBL("lambda_dice", lambda_dice),
      LVG_BOOL("text_negatives", text_negatives),
      LVG_BOOL("scaled_similarity", scaled_similarity),
      LVG_DBL("mask_threshold", mask_threshold),
      LVG_DBL("empty_threshold", empty_threshold),
      LVG_BOOL("bilinear_resize", bilinear_resize),
      LVG_BOOL("gres_enabled", gres_enabled),
      LVG_DBL("gres_loss_weight", gres_loss_weight),
      LVG_DBL("lr", lr),
      LVG_DBL("weight_decay", weight_decay),
      LVG_DBL("grad_clip", grad_clip),
      Field{"seed",
            [](ModelConfig& c, const std::string& v) {
              std::uint64_t out = 0;
              auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
              if (ec != std::errc() || ptr != v.data() + v.size()) {
                throw ConfigError("'seed': expected unsigned integer, got '" + v + "'");
              }
              c.seed = out;
            },
            [](const ModelConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

#undef LVG_INT
#undef LVG_DBL
#undef LVG_BOOL

}  // namespace

int ModelConfig::upsample_stages() const {
  if (patch < 4 || patch % 4 != 0) {
    throw ShapeMismatch("patch size " + std::to_string(patch) + " is not 4 * 2^k");
  }
  int ratio = patch / 4;
  int stages = 0;
  while (ratio > 1) {
    if (ratio % 2 != 0) {
      throw ShapeMismatch("patch size " + std::to_string(patch) + " is not 4 * 2^k");
    }
    ratio /= 2;
    ++stages;
  }
  return stages;
}

int ModelConfig::total_attributes() const {
  int n = 0;
  for (int k : k_list) n += k;
  return n;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (d <= 0) fail("d must be positive");
  if (layers < 0) fail("layers must be >= 0");
  if (heads <= 0 || d % heads != 0) fail("d must be divisible by heads");
  if (ffn_hidden <= 0) fail("ffn_hidden must be positive");
  if (patch <= 0) fail("patch must be positive");
  if (image_h <= 0 || image_w <= 0 || image_h % patch != 0 || image_w % patch != 0) {
    fail("image_hw must be divisible by patch");
  }
  upsample_stages();
  if (vocab_size <= 0) fail("vocab_size must be positive");
  if (m_max <= 0) fail("m_max must be positive");
  if (p_drop_list.size() != k_list.size()) fail("k_list and p_drop_list lengths differ");
  for (int k : k_list) {
    if (k < 1) fail("every k must be >= 1");
  }
  for (double p : p_drop_list) {
    if (!(p >= 0.0 && p < 1.0)) fail("every dropout probability must lie in [0, 1)");
  }
  if (gumbel_temperature <= 0) fail("gumbel_temperature must be positive");
  if (num_concepts <= 0) fail("num_concepts must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(mask_threshold > 0.0 && mask_threshold < 1.0)) fail("mask_threshold must lie in (0, 1)");
  if (lambda_bce < 0 || lambda_dice < 0 || gres_loss_weight < 0) fail("loss weights must be >= 0");
  if (!(lr > 0)) fail("lr must be positive");
}

void ModelConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << to_text();
}

}  // namespace lvg

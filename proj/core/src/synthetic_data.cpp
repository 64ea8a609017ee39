#include "lvg/synthetic_data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace lvg::synth {

namespace {

constexpr std::array<const char*, kNumShapes> kShapeNames{"circle", "square", "triangle"};
constexpr std::array<const char*, 2> kSizeNames{"small", "large"};
constexpr std::array<const char*, kNumPositions> kPositionWords{"left", "right", "top", "bottom",
                                                               "center"};
constexpr std::array<const char*, kNumPositions> kPositionPrepositions{"on", "on", "at", "at",
                                                                      "in"};
constexpr int kNumColors = static_cast<int>(kPalette.size());
constexpr int kNumReserved = static_cast<int>(kReservedColors.size());

// Grid cell (row, col) of each named position in the 3x3 layout.
constexpr std::array<std::pair<int, int>, kNumPositions> kCells{
    {{1, 0}, {1, 2}, {0, 1}, {2, 1}, {1, 1}}};

template <std::size_t N>
int find_word(const std::array<const char*, N>& words, const std::string& w) {
  for (std::size_t i = 0; i < N; ++i) {
    if (w == words[i]) return static_cast<int>(i);
  }
  return -1;
}

int color_index(const std::string& w) {
  for (int i = 0; i < kNumColors; ++i) {
    if (w == kPalette[static_cast<std::size_t>(i)].name) return i;
  }
  const int r = find_word(kReservedColors, w);
  return r < 0 ? -1 : kNumColors + r;
}

// Attribute bits used when searching for an unambiguous description.
enum Attr : unsigned { kShape = 1, kColor = 2, kSize = 4, kPos = 8 };

Query query_for(const SceneObject& o, unsigned attrs) {
  Query q;
  if (attrs & kShape) q.shape = o.shape;
  if (attrs & kColor) q.color = o.color;
  if (attrs & kSize) q.size = o.size;
  if (attrs & kPos) q.position = o.position;
  return q;
}

int count_matches(const Query& q, const std::vector<SceneObject>& objs) {
  int n = 0;
  for (const auto& o : objs) n += q.matches(o);
  return n;
}

struct Geometry {
  int cell_h, cell_w, large, small;
};

Geometry geometry(int height, int width) {
  Geometry g{height / 3, width / 3, 0, 0};
  const int cell = std::min(g.cell_h, g.cell_w);
  g.large = std::max(2, (cell - 3) / 2);
  g.small = std::max(1, cell / 4);
  return g;
}

}  // namespace

bool Query::matches(const SceneObject& o) const {
  return (!shape || *shape == o.shape) && (!color || *color == o.color) &&
         (!size || *size == o.size) && (!position || *position == o.position);
}

const char* shape_name(Shape s) { return kShapeNames[static_cast<std::size_t>(s)]; }
const char* size_name(Size s) { return kSizeNames[static_cast<std::size_t>(s)]; }

const char* position_phrase(Position p) {
  static const std::array<std::string, kNumPositions> phrases = [] {
    std::array<std::string, kNumPositions> out;
    for (int i = 0; i < kNumPositions; ++i) {
      out[static_cast<std::size_t>(i)] = std::string(kPositionPrepositions[static_cast<std::size_t>(i)]) +
                                         " the " + kPositionWords[static_cast<std::size_t>(i)];
    }
    return out;
  }();
  return phrases[static_cast<std::size_t>(p)].c_str();
}

std::string color_name(int color) {
  if (color >= 0 && color < kNumColors) return kPalette[static_cast<std::size_t>(color)].name;
  if (color >= kNumColors && color < kNumColors + kNumReserved) {
    return kReservedColors[static_cast<std::size_t>(color - kNumColors)];
  }
  throw FormatError("color index " + std::to_string(color) + " out of range");
}

void Vocabulary::add(const std::string& w) {
  if (index_.count(w)) return;
  index_[w] = static_cast<int>(words_.size());
  words_.push_back(w);
}

Vocabulary Vocabulary::standard() {
  Vocabulary v;
  v.add("<unk>");
  for (const char* w : {"the", "object", "on", "at", "in"}) v.add(w);
  for (const char* w : kShapeNames) v.add(w);
  for (const char* w : kSizeNames) v.add(w);
  for (const auto& c : kPalette) v.add(c.name);
  for (const char* w : kReservedColors) v.add(w);
  for (const char* w : kPositionWords) v.add(w);
  return v;
}

int Vocabulary::id(const std::string& word) const {
  const auto it = index_.find(word);
  return it == index_.end() ? 0 : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::istringstream is(text);
  std::vector<int> ids;
  for (std::string w; is >> w;) ids.push_back(id(w));
  return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int i : ids) {
    if (!out.empty()) out += ' ';
    out += (i >= 0 && i < size()) ? word(i) : words_.front();
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  for (const auto& w : words_) os << w << "\n";
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path.string());
  Vocabulary v;
  for (std::string line; std::getline(is, line);) {
    if (line.empty()) continue;
    if (v.index_.count(line)) throw FormatError("duplicate vocabulary word '" + line + "'");
    v.add(line);
  }
  if (v.words_.empty()) throw FormatError(path.string() + " holds no words");
  return v;
}

std::string describe(const Query& q) {
  std::string s = "the";
  if (q.size) s += std::string(" ") + size_name(*q.size);
  if (q.color) s += " " + color_name(*q.color);
  s += std::string(" ") + (q.shape ? shape_name(*q.shape) : "object");
  if (q.position) s += std::string(" ") + position_phrase(*q.position);
  return s;
}

Query parse_expression(const std::string& text) {
  std::istringstream is(text);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  Query q;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string& w = words[i];
    if (w == "the" || w == "object") continue;
    if (const int s = find_word(kShapeNames, w); s >= 0) {
      q.shape = static_cast<Shape>(s);
    } else if (const int z = find_word(kSizeNames, w); z >= 0) {
      q.size = static_cast<Size>(z);
    } else if (const int c = color_index(w); c >= 0) {
      q.color = c;
    } else if (find_word(kPositionPrepositions, w) >= 0) {
      if (i + 2 >= words.size() || words[i + 1] != "the") {
        throw FormatError("incomplete position phrase in '" + text + "'");
      }
      const int p = find_word(kPositionWords, words[i + 2]);
      if (p < 0) throw FormatError("unknown position '" + words[i + 2] + "'");
      q.position = static_cast<Position>(p);
      i += 2;
    } else {
      throw FormatError("unknown word '" + w + "'");
    }
  }
  return q;
}

Mask rasterize(const SceneObject& o, int height, int width) {
  Mask m(height, width);
  const int r = o.radius;
  for (int y = std::max(0, o.cy - r); y <= std::min(height - 1, o.cy + r); ++y) {
    for (int x = std::max(0, o.cx - r); x <= std::min(width - 1, o.cx + r); ++x) {
      const int dx = x - o.cx;
      const int dy = y - o.cy;
      bool in = false;
      switch (o.shape) {
        case Shape::Circle:
          in = dx * dx + dy * dy <= r * r;
          break;
        case Shape::Square:
          in = true;
          break;
        case Shape::Triangle:
          // Apex up: half-width grows by one pixel every two rows.
          in = 2 * std::abs(dx) <= dy + r;
          break;
      }
      if (in) m.at(y, x) = 1;
    }
  }
  return m;
}

SceneSpec sample_scene(Rng& rng, const GeneratorOptions& opts, bool no_target) {
  if (opts.min_objects < 1 || opts.max_objects > kNumPositions ||
      opts.min_objects > opts.max_objects) {
    throw InfeasibleSpec("object count range [" + std::to_string(opts.min_objects) + ", " +
                         std::to_string(opts.max_objects) + "] outside [1, 5]");
  }
  const Geometry g = geometry(opts.height, opts.width);
  if (g.small < 1 || g.cell_h < 3 || g.cell_w < 3) {
    throw InfeasibleSpec("image " + shape_str(opts.height, opts.width) + " too small for a 3x3 layout");
  }
  for (int attempt = 0; attempt < opts.max_retries; ++attempt) {
    SceneSpec spec;
    const int n = rng.uniform_int(opts.min_objects, opts.max_objects);
    std::array<int, kNumPositions> slots{0, 1, 2, 3, 4};
    std::shuffle(slots.begin(), slots.end(), rng.engine());
    for (int i = 0; i < n; ++i) {
      SceneObject o;
      o.shape = static_cast<Shape>(rng.uniform_int(0, kNumShapes - 1));
      o.color = rng.uniform_int(0, kNumColors - 1);
      o.size = rng.bernoulli(0.5) ? Size::Large : Size::Small;
      o.position = static_cast<Position>(slots[static_cast<std::size_t>(i)]);
      o.radius = o.size == Size::Large ? g.large : g.small;
      const auto [row, col] = kCells[static_cast<std::size_t>(o.position)];
      const int slack_y = std::max(0, (g.cell_h - (2 * o.radius + 1)) / 2);
      const int slack_x = std::max(0, (g.cell_w - (2 * o.radius + 1)) / 2);
      o.cy = row * g.cell_h + g.cell_h / 2 + rng.uniform_int(-slack_y, slack_y);
      o.cx = col * g.cell_w + g.cell_w / 2 + rng.uniform_int(-slack_x, slack_x);
      spec.objects.push_back(o);
    }

    if (no_target) {
      Query q;
      if (opts.no_target_mode == NoTargetMode::ReservedColor) {
        q.color = kNumColors + rng.uniform_int(0, kNumReserved - 1);
      } else {
        std::vector<int> absent;
        for (int c = 0; c < kNumColors; ++c) {
          const bool used = std::any_of(spec.objects.begin(), spec.objects.end(),
                                        [c](const SceneObject& o) { return o.color == c; });
          if (!used) absent.push_back(c);
        }
        if (absent.empty()) continue;
        q.color = absent[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(absent.size()) - 1))];
      }
      q.shape = static_cast<Shape>(rng.uniform_int(0, kNumShapes - 1));
      if (count_matches(q, spec.objects) != 0) continue;
      spec.query = q;
      return spec;
    }

    const int target = rng.uniform_int(0, n - 1);
    std::vector<unsigned> unique;
    for (unsigned attrs = 1; attrs < 16; ++attrs) {
      const int bits = __builtin_popcount(attrs);
      if (bits > 2) continue;
      const Query q = query_for(spec.objects[static_cast<std::size_t>(target)], attrs);
      if (count_matches(q, spec.objects) == 1) unique.push_back(attrs);
    }
    if (unique.empty()) continue;
    const unsigned pick = unique[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(unique.size()) - 1))];
    spec.target = target;
    spec.query = query_for(spec.objects[static_cast<std::size_t>(target)], pick);
    return spec;
  }
  throw InfeasibleSpec("no unambiguous expression after " + std::to_string(opts.max_retries) +
                       " attempts");
}

RenderedScene render(const SceneSpec& spec, int height, int width, Rng* noise_rng, double noise) {
  RenderedScene out{Image(height, width), {}};
  constexpr float kBackground = 0.08f;
  std::fill(out.image.pixels.begin(), out.image.pixels.end(), kBackground);
  for (const auto& o : spec.objects) {
    Mask m = rasterize(o, height, width);
    const auto& rgb = kPalette[static_cast<std::size_t>(o.color)].rgb;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!m.at(y, x)) continue;
        for (int ch = 0; ch < 3; ++ch) out.image.at(y, x, ch) = rgb[static_cast<std::size_t>(ch)];
      }
    }
    out.masks.push_back(std::move(m));
  }
  if (noise_rng != nullptr && noise > 0) {
    for (float& v : out.image.pixels) {
      v = std::clamp(v + static_cast<float>(noise_rng->uniform(-noise, noise)), 0.0f, 1.0f);
    }
  }
  return out;
}

Dataset generate_dataset(int count, const GeneratorOptions& opts, std::uint64_t seed,
                         std::uint64_t split) {
  if (count < 1) throw InfeasibleSpec("sample count must be at least 1");
  if (opts.no_target_fraction < 0 || opts.no_target_fraction > 1) {
    throw InfeasibleSpec("no-target fraction must lie in [0, 1]");
  }
  Dataset ds;
  ds.vocab = Vocabulary::standard();
  ds.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, split, static_cast<std::uint64_t>(i)));
    const bool no_target = opts.no_target_fraction > 0 && rng.bernoulli(opts.no_target_fraction);
    SceneSpec spec = sample_scene(rng, opts, no_target);
    RenderedScene scene = render(spec, opts.height, opts.width, &rng, opts.noise);

    SceneSample s;
    s.id = static_cast<std::uint64_t>(i);
    s.image = std::move(scene.image);
    s.expression = describe(spec.query);
    s.token_ids = ds.vocab.encode(s.expression);
    s.no_target = !spec.target.has_value();
    s.gt_mask = s.no_target ? Mask(opts.height, opts.width)
                            : scene.masks[static_cast<std::size_t>(*spec.target)];
    s.gt_box = tight_box(s.gt_mask);
    ds.samples.push_back(std::move(s));
    ds.specs.push_back(std::move(spec));
  }
  return ds;
}

}  // namespace lvg::synth

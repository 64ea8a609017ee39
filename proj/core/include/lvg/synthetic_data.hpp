#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "lvg/rng.hpp"
#include "lvg/types.hpp"

namespace lvg::synth {

enum class Shape { Circle, Square, Triangle };
enum class Size { Small, Large };
enum class Position { Left, Right, Top, Bottom, Center };

inline constexpr int kNumShapes = 3;
inline constexpr int kNumPositions = 5;

struct Color {
  const char* name;
  std::array<float, 3> rgb;
};

/// Colours objects can be painted with.
inline constexpr std::array<Color, 8> kPalette{{
    {"red", {0.90f, 0.15f, 0.15f}},
    {"green", {0.15f, 0.80f, 0.20f}},
    {"blue", {0.15f, 0.30f, 0.95f}},
    {"yellow", {0.95f, 0.90f, 0.15f}},
    {"purple", {0.60f, 0.20f, 0.80f}},
    {"orange", {1.00f, 0.55f, 0.05f}},
    {"cyan", {0.10f, 0.85f, 0.90f}},
    {"white", {0.95f, 0.95f, 0.95f}},
}};

/// Colour words that never appear in any image. Expressions using them refer
/// to nothing.
inline constexpr std::array<const char*, 2> kReservedColors{"pink", "gray"};

struct SceneObject {
  Shape shape = Shape::Circle;
  int color = 0;  // index into kPalette
  Size size = Size::Large;
  Position position = Position::Center;
  int cx = 0;
  int cy = 0;
  int radius = 0;
};

/// Attribute filter an expression encodes. Unset fields match anything.
struct Query {
  std::optional<Shape> shape;
  std::optional<int> color;  // kPalette index, or kPalette.size() + j for reserved colour j
  std::optional<Size> size;
  std::optional<Position> position;

  bool matches(const SceneObject& o) const;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  std::optional<int> target;  // absent for no-target scenes
  Query query;
};

const char* shape_name(Shape s);
const char* size_name(Size s);
const char* position_phrase(Position p);  // e.g. "on the left"
std::string color_name(int color);

/// Fixed word-level vocabulary; id 0 is the unknown word.
class Vocabulary {
 public:
  /// Every word the expression grammar can produce.
  static Vocabulary standard();

  int id(const std::string& word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(words_.size()); }

  /// Whitespace tokenization.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
  void add(const std::string& w);
};

/// Renders a query as words, e.g. "the large red circle on the left".
std::string describe(const Query& q);

/// Inverse of describe(). Throws FormatError on words outside the grammar.
Query parse_expression(const std::string& text);

enum class NoTargetMode {
  ReservedColor,  // a colour word that never appears in images
  AbsentColor,    // a palette colour missing from this particular scene
};

struct GeneratorOptions {
  int height = 64;
  int width = 64;
  int min_objects = 2;
  int max_objects = 5;
  double no_target_fraction = 0.0;
  NoTargetMode no_target_mode = NoTargetMode::ReservedColor;
  double noise = 0.02;  // uniform per-pixel jitter amplitude
  int max_retries = 100;
};

/// Random layout, target and unambiguous expression.
SceneSpec sample_scene(Rng& rng, const GeneratorOptions& opts, bool no_target);

struct RenderedScene {
  Image image;
  std::vector<Mask> masks;  // one per object
};

/// Hard-edged rasterization; `rng` only drives the background noise.
RenderedScene render(const SceneSpec& spec, int height, int width, Rng* noise_rng = nullptr,
                     double noise = 0.0);

/// Pixel mask of a single object.
Mask rasterize(const SceneObject& o, int height, int width);

struct Dataset {
  std::vector<SceneSample> samples;
  std::vector<SceneSpec> specs;
  Vocabulary vocab;
};

/// Deterministic in (seed, split). Distinct `split` values draw from disjoint
/// per-scene seed streams.
Dataset generate_dataset(int count, const GeneratorOptions& opts, std::uint64_t seed,
                         std::uint64_t split = 0);

}  // namespace lvg::synth

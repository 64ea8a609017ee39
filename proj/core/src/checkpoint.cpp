#include "lvg/checkpoint.hpp"

#include <fstream>

namespace lvg {

namespace {

constexpr char kMagic[8] = {'L', 'V', 'G', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("checkpoint truncated");
  return v;
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, std::uint64_t limit) {
  const auto n = get<std::uint64_t>(is);
  if (n > limit) throw FormatError("checkpoint string length " + std::to_string(n) + " implausible");
  std::string s(n, '\0');
  if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError("checkpoint truncated");
  return s;
}

}  // namespace

Checkpoint Checkpoint::capture(const LatentVG& model, std::uint64_t step) {
  Checkpoint c;
  c.config = model.config();
  c.step = step;
  for (const Parameter& p : model.parameters()) c.tensors[p.name] = p.value;
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    put_string(os, config.to_text());
    put<std::uint64_t>(os, step);
    put<std::uint64_t>(os, tensors.size());
    for (const auto& [name, m] : tensors) {
      put_string(os, name);
      put<std::int64_t>(os, m.rows());
      put<std::int64_t>(os, m.cols());
      os.write(reinterpret_cast<const char*>(m.data()),
               static_cast<std::streamsize>(m.size() * sizeof(Real)));
    }
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot read checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || !std::equal(magic, magic + sizeof(magic), kMagic)) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  Checkpoint c;
  c.config = ModelConfig::parse(get_string(is, 1 << 20));
  c.step = get<std::uint64_t>(is);
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name = get_string(is, 4096);
    const auto rows = get<std::int64_t>(is);
    const auto cols = get<std::int64_t>(is);
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 28)) {
      throw FormatError("tensor " + name + " has implausible shape " + shape_str(rows, cols));
    }
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(Real)))) {
      throw FormatError("checkpoint truncated inside " + name);
    }
    c.tensors.emplace(std::move(name), std::move(m));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes in " + path.string());
  return c;
}

void Checkpoint::apply_to(LatentVG& model) const {
  ParameterStore& store = model.parameters();
  if (store.size() != tensors.size()) {
    throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                      std::to_string(store.size()));
  }
  for (Parameter& p : store) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks " + p.name);
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw ShapeMismatch(p.name + ": checkpoint " + shape_str(it->second.rows(), it->second.cols()) +
                          " vs model " + shape_str(p.value.rows(), p.value.cols()));
    }
    p.value = it->second;
  }
}

std::unique_ptr<LatentVG> Checkpoint::restore() const {
  auto model = std::make_unique<LatentVG>(config, config.seed);
  apply_to(*model);
  return model;
}

}  // namespace lvg

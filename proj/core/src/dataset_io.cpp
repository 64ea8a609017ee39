#include "lvg/dataset_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <memory>
#include <sstream>

#include "json.hpp"

namespace lvg::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kImageMagic = "LVGIMG";

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw FormatError("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::string to_hex(const unsigned char* data, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += digits[data[i] >> 4];
    out += digits[data[i] & 15];
  }
  return out;
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw Error("sha256 init failed");
    }
  }
  void update(const std::string& s) { EVP_DigestUpdate(ctx_.get(), s.data(), s.size()); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    return to_hex(md, len);
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::vector<int> rle_encode(const Mask& mask) {
  std::vector<int> runs;
  std::uint8_t cur = 0;
  int len = 0;
  for (std::uint8_t v : mask.data) {
    const std::uint8_t b = v ? 1 : 0;
    if (b != cur) {
      runs.push_back(len);
      cur = b;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return runs;
}

Mask rle_decode(const std::vector<int>& runs, int height, int width) {
  Mask m(height, width);
  std::size_t pos = 0;
  std::uint8_t cur = 0;
  for (int r : runs) {
    if (r < 0 || pos + static_cast<std::size_t>(r) > m.data.size()) {
      throw FormatError("mask runs exceed " + shape_str(height, width));
    }
    std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(pos), r, cur);
    pos += static_cast<std::size_t>(r);
    cur ^= 1;
  }
  if (pos != m.data.size()) throw FormatError("mask runs cover " + std::to_string(pos) + " pixels");
  return m;
}

void save_split(const fs::path& dir, const std::vector<SceneSample>& samples) {
  fs::create_directories(dir);
  const int h = samples.empty() ? 0 : samples.front().image.height;
  const int w = samples.empty() ? 0 : samples.front().image.width;

  std::ofstream img(dir / "images.raw", std::ios::binary);
  if (!img) throw FormatError("cannot write " + (dir / "images.raw").string());
  img << kImageMagic << ' ' << samples.size() << ' ' << h << ' ' << w << " 3\n";
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  for (const auto& s : samples) {
    if (s.image.height != h || s.image.width != w) {
      throw ShapeMismatch("split mixes image sizes");
    }
    std::transform(s.image.pixels.begin(), s.image.pixels.end(), bytes.begin(), [](float v) {
      return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    });
    img.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }

  std::ofstream ann(dir / "annotations.jsonl");
  if (!ann) throw FormatError("cannot write " + (dir / "annotations.jsonl").string());
  for (const auto& s : samples) {
    json j;
    j["id"] = s.id;
    j["expression"] = s.expression;
    j["tokens"] = s.token_ids;
    j["no_target"] = s.no_target;
    j["box"] = s.gt_box ? json::array({s.gt_box->x_min, s.gt_box->y_min, s.gt_box->x_max,
                                       s.gt_box->y_max})
                        : json(nullptr);
    j["mask"] = {{"h", s.gt_mask.height}, {"w", s.gt_mask.width}, {"rle", rle_encode(s.gt_mask)}};
    ann << j.dump() << "\n";
  }
}

std::vector<SceneSample> load_split(const fs::path& dir) {
  std::ifstream img(dir / "images.raw", std::ios::binary);
  if (!img) throw FormatError("missing " + (dir / "images.raw").string());
  std::string header;
  std::getline(img, header);
  std::istringstream hs(header);
  std::string magic;
  std::size_t count = 0;
  int h = 0, w = 0, c = 0;
  if (!(hs >> magic >> count >> h >> w >> c) || magic != kImageMagic || c != 3) {
    throw FormatError("bad image header '" + header + "'");
  }

  std::ifstream ann(dir / "annotations.jsonl");
  if (!ann) throw FormatError("missing " + (dir / "annotations.jsonl").string());

  std::vector<SceneSample> out;
  out.reserve(count);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(h) * w * 3);
  std::string line;
  for (std::size_t i = 0; i < count; ++i) {
    if (!img.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
      throw FormatError("images.raw truncated at sample " + std::to_string(i));
    }
    if (!std::getline(ann, line)) {
      throw FormatError("annotations.jsonl has fewer than " + std::to_string(count) + " lines");
    }
    SceneSample s;
    s.image = Image(h, w);
    std::transform(bytes.begin(), bytes.end(), s.image.pixels.begin(),
                   [](unsigned char b) { return static_cast<float>(b) / 255.0f; });
    try {
      const json j = json::parse(line);
      s.id = j.at("id").get<std::uint64_t>();
      s.expression = j.at("expression").get<std::string>();
      s.token_ids = j.at("tokens").get<std::vector<int>>();
      s.no_target = j.at("no_target").get<bool>();
      const json& m = j.at("mask");
      s.gt_mask = rle_decode(m.at("rle").get<std::vector<int>>(), m.at("h").get<int>(),
                             m.at("w").get<int>());
      const json& b = j.at("box");
      if (!b.is_null()) {
        const auto v = b.get<std::vector<int>>();
        if (v.size() != 4) throw FormatError("box needs 4 coordinates");
        s.gt_box = Box{v[0], v[1], v[2], v[3]};
      }
    } catch (const json::exception& e) {
      throw FormatError("annotation " + std::to_string(i) + ": " + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  Sha256 sha;
  sha.update(bytes);
  return sha.hex();
}

std::string dataset_hash(const fs::path& root) {
  if (!fs::is_directory(root)) throw FormatError(root.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
  }
  std::sort(files.begin(), files.end());
  Sha256 sha;
  for (const auto& f : files) {
    const std::string body = read_file(root / f);
    sha.update(f.generic_string());
    sha.update(std::string(1, '\0'));
    sha.update(std::to_string(body.size()));
    sha.update(std::string(1, '\0'));
    sha.update(body);
  }
  return sha.hex();
}

}  // namespace lvg::io

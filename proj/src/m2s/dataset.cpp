#include "m2s/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "m2s/rng.hpp"

namespace fs = std::filesystem;

namespace m2s {

namespace {

std::map<std::string, fs::path> list_images(const fs::path& dir, std::initializer_list<const char*> exts) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = entry.path().extension().string();
    for (const char* e : exts) {
      if (ext == e) out[entry.path().stem().string()] = entry.path();
    }
  }
  return out;
}

Image8 to_rgb(const Image8& img) {
  if (img.channels == 3) return img;
  Image8 out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 3;
  out.pixels.resize(img.pixels.size() * 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    for (int c = 0; c < 3; ++c) out.pixels[i * 3 + static_cast<std::size_t>(c)] = img.pixels[i];
  }
  return out;
}

}  // namespace

void validate_mask(const Image8& mask, int num_classes, const std::string& id) {
  M2S_CHECK(mask.channels == 1, Data, "mask '", id, "' must be single-channel");
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int v = mask.at(y, x);
      const bool ok = num_classes == 1 ? (v == 0 || v == 255) : v < num_classes;
      M2S_CHECK(ok, Data, "mask '", id, "' has invalid value ", v, " at pixel (x=", x, ", y=", y, ") for ",
                num_classes == 1 ? "binary masks (0/255)" : "label masks");
    }
  }
}

std::vector<Sample> load_folder(const fs::path& dir, int num_classes) {
  if (!fs::exists(dir)) M2S_THROW(Io, "dataset directory '", dir.string(), "' does not exist");
  const auto images = list_images(dir / "images", {".ppm", ".pgm"});
  const auto masks = list_images(dir / "masks", {".pgm"});
  std::vector<std::string> problems;
  for (const auto& [id, p] : images) {
    if (!masks.count(id)) problems.push_back("image '" + id + "' has no mask");
  }
  for (const auto& [id, p] : masks) {
    if (!images.count(id)) problems.push_back("mask '" + id + "' has no image");
  }
  if (!problems.empty()) {
    std::ostringstream os;
    os << problems.size() << " unpaired file(s) in '" << dir.string() << "':";
    for (const auto& p : problems) os << "\n  " << p;
    throw Error(ErrorKind::Data, os.str());
  }
  std::vector<Sample> out;
  for (const auto& [id, image_path] : images) {
    Sample s;
    s.id = id;
    s.image = to_rgb(read_netpbm(image_path));
    s.mask = read_netpbm(masks.at(id));
    M2S_CHECK(s.mask.channels == 1, Data, "mask '", id, "' must be a PGM");
    M2S_CHECK(s.image.width == s.mask.width && s.image.height == s.mask.height, Data, "sample '", id,
              "': image ", s.image.width, "x", s.image.height, " vs mask ", s.mask.width, "x", s.mask.height);
    validate_mask(s.mask, num_classes, id);
    out.push_back(std::move(s));
  }
  return out;
}

void save_folder(const fs::path& dir, std::span<const Sample> samples) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (const auto& s : samples) {
    write_netpbm(dir / "images" / (s.id + (s.image.channels == 3 ? ".ppm" : ".pgm")), s.image);
    write_netpbm(dir / "masks" / (s.id + ".pgm"), s.mask);
  }
}

std::vector<std::vector<std::size_t>> kfold(std::size_t n, int k, std::uint64_t seed) {
  M2S_CHECK(k >= 1, Config, "kfold: k must be >= 1, got ", k);
  M2S_CHECK(n >= static_cast<std::size_t>(k), Data, "kfold: ", n, " samples cannot fill ", k, " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, {0x6b666f6c64ULL});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  const std::size_t base = n / static_cast<std::size_t>(k);
  const std::size_t extra = n % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

Split holdout_split(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = make_rng(seed, {0x686f6c646f7574ULL});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(n)));
  if (fraction > 0 && n >= 2 && n_val == 0) n_val = 1;
  if (n_val >= n) n_val = n > 0 ? n - 1 : 0;
  Split s;
  s.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

Tensor image_tensor(const Image8& img) {
  Tensor t(Shape{1, img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        t.at(0, c, y, x) = (static_cast<Real>(img.at(y, x, c)) / Real(255) - Real(0.5)) / Real(0.25);
      }
    }
  }
  return t;
}

Tensor mask_tensor(const Image8& mask, int num_classes) {
  Tensor t(Shape{1, 1, mask.height, mask.width});
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) t.at(0, 0, y, x) = mask_target(mask.at(y, x), num_classes);
  }
  return t;
}

Image8 resize_nearest(const Image8& img, int width, int height) {
  if (img.width == width && img.height == height) return img;
  Image8 out;
  out.width = width;
  out.height = height;
  out.channels = img.channels;
  out.pixels.resize(static_cast<std::size_t>(width) * height * img.channels);
  for (int y = 0; y < height; ++y) {
    const int sy = std::min(img.height - 1, static_cast<int>((y + 0.5) * img.height / height));
    for (int x = 0; x < width; ++x) {
      const int sx = std::min(img.width - 1, static_cast<int>((x + 0.5) * img.width / width));
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

}  // namespace m2s

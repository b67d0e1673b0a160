#include "m2s/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "m2s/rng.hpp"

namespace m2s {

namespace {

struct Ellipse {
  double cx, cy, rx, ry, theta;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(theta), s = std::sin(theta);
    const double u = (dx * c + dy * s) / rx;
    const double v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

// Fraction of 4x4 sub-pixel samples inside any ellipse.
double coverage(const std::vector<Ellipse>& shapes, int x, int y) {
  int hits = 0;
  for (int sy = 0; sy < 4; ++sy) {
    for (int sx = 0; sx < 4; ++sx) {
      const double px = x + (sx + 0.5) / 4.0, py = y + (sy + 0.5) / 4.0;
      for (const auto& e : shapes) {
        if (e.contains(px, py)) {
          ++hits;
          break;
        }
      }
    }
  }
  return hits / 16.0;
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

Sample blobs(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const int n = spec.canvas;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> count(spec.blob_count_min, spec.blob_count_max);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };

  auto draw = [&](double rmin, double rmax) {
    Ellipse e;
    e.rx = uniform(rmin, rmax);
    e.ry = uniform(rmin, rmax);
    const double r = std::max(e.rx, e.ry);
    e.cx = uniform(r, n - r);
    e.cy = uniform(r, n - r);
    e.theta = uniform(0.0, std::numbers::pi);
    return e;
  };

  std::vector<Ellipse> targets;
  const int k = count(rng);
  for (int i = 0; i < k; ++i) targets.push_back(draw(spec.radius_min, spec.radius_max));
  std::vector<Ellipse> distractors;
  const int d = std::uniform_int_distribution<int>(0, 2)(rng);
  for (int i = 0; i < d; ++i) distractors.push_back(draw(spec.radius_min * 0.5, spec.radius_min));

  double base[3], tint[3];
  for (int c = 0; c < 3; ++c) {
    base[c] = uniform(0.25, 0.5);
    tint[c] = uniform(0.7, 1.3);
  }
  const double gx = uniform(-0.1, 0.1), gy = uniform(-0.1, 0.1);

  Sample s;
  s.image = Image8{n, n, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(n * n * 3))};
  s.mask = Image8{n, n, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(n * n))};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double fg = coverage(targets, x, y);
      const double dark = distractors.empty() ? 0.0 : coverage(distractors, x, y);
      s.mask.at(y, x) = fg >= 0.5 ? 255 : 0;
      const double shade = gx * (x - n / 2.0) / n + gy * (y - n / 2.0) / n;
      for (int c = 0; c < 3; ++c) {
        const double v = base[c] + shade + spec.contrast * tint[c] * fg - 0.6 * spec.contrast * dark;
        s.image.at(y, x, c) = to_byte(v + noise(rng));
      }
    }
  }
  return s;
}

Sample layers(const SyntheticSpec& spec, std::mt19937_64& rng) {
  const int n = spec.canvas;
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);
  auto uniform = [&](double a, double b) { return a + (b - a) * u01(rng); };
  constexpr double two_pi = 2.0 * std::numbers::pi;

  struct Wave {
    double offset, amp, freq, phase;
    double at(double x, double width) const {
      return offset + amp * std::sin(2.0 * std::numbers::pi * freq * x / width + phase);
    }
  };
  const Wave top{uniform(0.18, 0.3), uniform(0.02, 0.08), uniform(0.5, 1.5), uniform(0.0, two_pi)};
  const Wave t1{uniform(0.12, 0.2), uniform(0.0, 0.04), uniform(0.5, 2.0), uniform(0.0, two_pi)};
  const Wave t2{uniform(0.12, 0.2), uniform(0.0, 0.04), uniform(0.5, 2.0), uniform(0.0, two_pi)};
  const double level[4] = {uniform(0.05, 0.2), uniform(0.55, 0.7), uniform(0.3, 0.45), uniform(0.75, 0.9)};
  const double min_thickness = 2.0 / n;

  Sample s;
  s.image = Image8{n, n, 3, std::vector<std::uint8_t>(static_cast<std::size_t>(n * n * 3))};
  s.mask = Image8{n, n, 1, std::vector<std::uint8_t>(static_cast<std::size_t>(n * n))};
  for (int x = 0; x < n; ++x) {
    const double b1 = top.at(x + 0.5, n);
    const double b2 = b1 + std::max(min_thickness, t1.at(x + 0.5, n));
    const double b3 = b2 + std::max(min_thickness, t2.at(x + 0.5, n));
    for (int y = 0; y < n; ++y) {
      const double fy = (y + 0.5) / n;
      const int label = fy < b1 ? 0 : fy < b2 ? 1 : fy < b3 ? 2 : 3;
      s.mask.at(y, x) = static_cast<std::uint8_t>(label);
      const std::uint8_t v = to_byte(level[label] + noise(rng));
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = v;
    }
  }
  return s;
}

}  // namespace

void SyntheticSpec::validate() const {
  M2S_CHECK(canvas >= 8, Config, "synthetic canvas must be >= 8");
  M2S_CHECK(blob_count_min >= 1 && blob_count_max >= blob_count_min, Config, "blob count range invalid");
  M2S_CHECK(radius_min > 0 && radius_max >= radius_min, Config, "blob radius range invalid");
  M2S_CHECK(2 * radius_max <= canvas, Config, "blob radius ", radius_max, " does not fit canvas ", canvas);
  M2S_CHECK(noise_sigma >= 0, Config, "noise sigma must be >= 0");
}

Sample synth_sample(const SyntheticSpec& spec, std::uint64_t seed, std::size_t index) {
  spec.validate();
  auto rng = make_rng(seed, {0x73796e7468ULL, index});
  Sample s = spec.topology == Topology::Blobs ? blobs(spec, rng) : layers(spec, rng);
  char id[32];
  std::snprintf(id, sizeof id, "%05zu", index);
  s.id = id;
  return s;
}

std::vector<Sample> synth_samples(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n) {
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth_sample(spec, seed, i));
  return out;
}

void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n,
                    const std::filesystem::path& dir) {
  const auto samples = synth_samples(spec, seed, n);
  save_folder(dir, samples);
}

}  // namespace m2s

#include "m2s/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace m2s {

AugmentDraw draw_augment(std::mt19937_64& rng, int max_angle) {
  AugmentDraw d;
  d.flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  d.angle_deg = std::uniform_int_distribution<int>(-max_angle, max_angle)(rng);
  return d;
}

Image8 flip_horizontal(const Image8& img) {
  Image8 out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
    }
  }
  return out;
}

Image8 rotate(const Image8& img, double angle_deg, bool nearest) {
  if (angle_deg == 0.0) return img;
  Image8 out = img;
  std::fill(out.pixels.begin(), out.pixels.end(), std::uint8_t{0});
  const double a = angle_deg * std::numbers::pi / 180.0;
  const double ca = std::cos(a), sa = std::sin(a);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // inverse map: output pixel -> source position
      const double dx = x - cx, dy = y - cy;
      const double sx = ca * dx - sa * dy + cx;
      const double sy = sa * dx + ca * dy + cy;
      if (nearest) {
        const long ix = std::lround(sx), iy = std::lround(sy);
        if (ix < 0 || iy < 0 || ix >= img.width || iy >= img.height) continue;
        for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = img.at(static_cast<int>(iy), static_cast<int>(ix), c);
        continue;
      }
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < img.channels; ++c) {
        auto px = [&](int yy, int xx) -> double {
          if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return 0.0;
          return img.at(yy, xx, c);
        };
        const double v = (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                         fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1));
        out.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Sample apply_augment(const Sample& s, const AugmentDraw& d) {
  Sample out = s;
  if (d.flip) {
    out.image = flip_horizontal(out.image);
    out.mask = flip_horizontal(out.mask);
  }
  if (d.angle_deg != 0) {
    out.image = rotate(out.image, d.angle_deg, false);
    out.mask = rotate(out.mask, d.angle_deg, true);
  }
  return out;
}

Sample augment(const Sample& s, std::mt19937_64& rng) { return apply_augment(s, draw_augment(rng)); }

}  // namespace m2s

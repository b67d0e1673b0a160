#pragma once

#include <random>

#include "m2s/dataset.hpp"

namespace m2s {

struct AugmentDraw {
  bool flip = false;
  int angle_deg = 0;  // counter-clockwise, integer degrees in [-15, 15]
};

AugmentDraw draw_augment(std::mt19937_64& rng, int max_angle = 15);

// Same geometric transform for image and mask: bilinear image, nearest mask,
// zero fill outside the source. Rotation is about the image centre.
Sample apply_augment(const Sample& s, const AugmentDraw& d);
Sample augment(const Sample& s, std::mt19937_64& rng);

Image8 flip_horizontal(const Image8& img);
Image8 rotate(const Image8& img, double angle_deg, bool nearest);

}  // namespace m2s

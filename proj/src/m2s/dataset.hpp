#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "m2s/netpbm.hpp"
#include "m2s/tensor.hpp"

namespace m2s {

struct Sample {
  Image8 image;  // 3 channels
  Image8 mask;   // 1 channel: 0/255 for binary, label index otherwise
  std::string id;
};

// Reads <dir>/images/<id>.{ppm,pgm} and <dir>/masks/<id>.pgm in lexicographic id order.
// Binary masks (num_classes == 1) must be 0/255; label masks must be < num_classes.
std::vector<Sample> load_folder(const std::filesystem::path& dir, int num_classes);
void save_folder(const std::filesystem::path& dir, std::span<const Sample> samples);

void validate_mask(const Image8& mask, int num_classes, const std::string& id);

// Mask value as a training target: {0,1} for binary masks, the label otherwise.
inline Real mask_target(std::uint8_t v, int num_classes) {
  return num_classes == 1 ? (v >= 128 ? Real(1) : Real(0)) : static_cast<Real>(v);
}

// Deterministic shuffle then k near-equal contiguous partitions.
std::vector<std::vector<std::size_t>> kfold(std::size_t n, int k, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
// Holds out round(fraction * n) shuffled samples (at least one when n >= 2).
Split holdout_split(std::size_t n, double fraction, std::uint64_t seed);

// Image channels scaled to [0,1] then normalised with mean 0.5 and std 0.25.
Tensor image_tensor(const Image8& img);
Tensor mask_tensor(const Image8& mask, int num_classes);

// Nearest-neighbour resize, used for label maps.
Image8 resize_nearest(const Image8& img, int width, int height);

}  // namespace m2s

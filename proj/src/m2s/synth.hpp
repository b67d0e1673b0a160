#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "m2s/dataset.hpp"

namespace m2s {

enum class Topology { Blobs, Layers };

struct SyntheticSpec {
  int canvas = 64;
  int blob_count_min = 1;
  int blob_count_max = 3;
  double radius_min = 6;
  double radius_max = 16;
  double contrast = 0.35;    // foreground offset as a fraction of full scale
  double noise_sigma = 0.08;  // fraction of full scale
  Topology topology = Topology::Blobs;

  void validate() const;
};

// Blobs: anti-aliased ellipses (mask = coverage >= 1/2) over a shaded
// background with darker distractor spots. Layers: three smooth
// non-crossing boundaries splitting every column into labels 0..3.
Sample synth_sample(const SyntheticSpec& spec, std::uint64_t seed, std::size_t index);
std::vector<Sample> synth_samples(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n);
void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, std::size_t n,
                    const std::filesystem::path& dir);

}  // namespace m2s

#pragma once

// Binary checkpoint container.
//
//   "M2SN" | u32 version | u32 count | count x entry
//   entry: u16 name_len | name (UTF-8) | u8 dtype | u8 rank | rank x u32 dim | raw LE values
//
// dtype 0 = f32, 1 = f64, 2 = u8 (UTF-8 metadata payloads).

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "m2s/tensor.hpp"

namespace m2s {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace m2s

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "kiprn/tensor.hpp"

namespace kiprn {

// Binary checkpoint: "KPRN" magic, u32 version, u32 tensor count, then per
// tensor a u16 name length, the name, a dtype byte (0 = f32, 1 = f64), a
// rank byte, u32 dims and the raw little-endian payload. A u32 step counter
// and the four RNG state words (as lo/hi u32 pairs) trail the tensors; the
// file must end exactly there. Tensors are written sorted by name.
struct CheckpointData {
  std::map<std::string, TensorF> f32;
  std::map<std::string, TensorD> f64;
  uint32_t step = 0;
  std::array<uint64_t, 4> rng_state{};
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

// Arbitrary UTF-8 payloads (the config snapshot) ride along as an f32
// tensor holding one byte per element.
TensorF bytes_to_tensor(const std::string& bytes);
std::string tensor_to_bytes(const TensorF& t);

}  // namespace kiprn

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flaming/tensor.hpp"

// .flmt container: 8-byte magic "FLMTENS1", u32 rank, rank x u64 extents,
// row-major little-endian f32 payload.
namespace flaming {

struct FloatArray {
  Shape shape;
  std::vector<float> values;
};

void write_flmt(const std::filesystem::path& path, const Shape& shape, std::span<const float> values);
FloatArray read_flmt(const std::filesystem::path& path);

// Doubles are narrowed to f32 on write.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

// Directory of .flmt files plus index.tsv ("name<TAB>file" per line).
void write_named_tensors(const std::filesystem::path& dir, const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_named_tensors(const std::filesystem::path& dir);

}  // namespace flaming

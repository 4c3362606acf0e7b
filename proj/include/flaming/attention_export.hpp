#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "flaming/model.hpp"
#include "flaming/synthdata.hpp"

namespace flaming {

// Binary PGM (P5, maxval 255) of an h x w map scaled by its maximum; an
// all-zero map stays black. IoError on write failure.
void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t h, std::size_t w);

// Header and pixels of a P5 file; SchemaError when malformed.
struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<unsigned char> pixels;
};
PgmImage read_pgm(const std::filesystem::path& path);

// Representative attention per (block, frame) as block<l>_frame<t>.pgm, plus
// token<k>_frame<t>.pgm for the first three tokens of the last block.
std::vector<std::filesystem::path> export_attention(const FlamingModel& model, const VideoSample& sample,
                                                    std::size_t k_flm, const std::filesystem::path& dir);

}  // namespace flaming

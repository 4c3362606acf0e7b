#include "flaming/attention_export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flaming/errors.hpp"
#include "flaming/evaluation.hpp"

namespace flaming {

void write_pgm(const std::filesystem::path& path, std::span<const double> values, std::size_t h, std::size_t w) {
  if (values.size() != h * w || h == 0 || w == 0) throw ContractError("write_pgm: map is not h x w");
  const double peak = *std::max_element(values.begin(), values.end());
  std::vector<unsigned char> px(values.size(), 0);
  if (peak > 0.0) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      px[i] = static_cast<unsigned char>(std::lround(255.0 * std::clamp(values[i] / peak, 0.0, 1.0)));
    }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << w << ' ' << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!os) throw IoError("write failed for " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  PgmImage img;
  is >> magic >> img.width >> img.height >> maxval;
  if (!is || magic != "P5" || maxval != 255 || img.width == 0 || img.height == 0) {
    throw SchemaError(path.string() + ": not an 8-bit P5 image");
  }
  is.get();  // the single whitespace byte before the raster
  img.pixels.resize(img.width * img.height);
  is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw SchemaError(path.string() + ": truncated raster");
  }
  return img;
}

std::vector<std::filesystem::path> export_attention(const FlamingModel& model, const VideoSample& sample,
                                                    std::size_t k_flm, const std::filesystem::path& dir) {
  const auto att = clip_attention(model, sample, k_flm);
  const std::size_t gh = model.config().encoder.grid_height, gw = model.config().encoder.grid_width;
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (std::size_t l = 0; l < att.blocks.size(); ++l) {
    for (std::size_t t = 0; t < att.blocks[l].size(); ++t) {
      auto p = dir / ("block" + std::to_string(l) + "_frame" + std::to_string(t) + ".pgm");
      write_pgm(p, att.blocks[l][t], gh, gw);
      written.push_back(std::move(p));
    }
  }
  for (std::size_t k = 0; k < std::min<std::size_t>(3, att.tokens.size()); ++k) {
    for (std::size_t t = 0; t < att.tokens[k].size(); ++t) {
      auto p = dir / ("token" + std::to_string(k) + "_frame" + std::to_string(t) + ".pgm");
      write_pgm(p, att.tokens[k][t], gh, gw);
      written.push_back(std::move(p));
    }
  }
  return written;
}

}  // namespace flaming

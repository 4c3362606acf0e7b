#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flaming/flowproc.hpp"
#include "flaming/losses.hpp"
#include "flaming/model.hpp"
#include "flaming/synthdata.hpp"
#include "flaming/training.hpp"

namespace flaming {

// Everything one run needs, addressable by flat `key = value` names.
struct RunConfig {
  GenConfig gen;
  std::size_t count = 400;  // clips written by `generate`
  ModelConfig model;
  LossConfig loss;
  FlowPrepConfig flow;
  TrainConfig train;

  struct Key {
    std::string name;
    std::string help;
  };
  // Every accepted key in file order, with a one-line description.
  static const std::vector<Key>& keys();

  // ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Reads `key = value` lines; `#` starts a comment. IoError when the file
  // cannot be read, ConfigError for grammar problems (with line numbers).
  void load_file(const std::filesystem::path& path);
  void parse(const std::string& text, const std::string& origin = "<config>");

  // Copies the shared extents between sections (frame size, grid, T) and
  // validates everything; throws ConfigError.
  void resolve();

  // Every key with its current value, loadable by parse().
  std::string render() const;
  void write_snapshot(const std::filesystem::path& path) const;
};

}  // namespace flaming

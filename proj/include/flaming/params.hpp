#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flaming/rng.hpp"
#include "flaming/tensor.hpp"

namespace flaming {

// Named, ordered trainable tensors. Handles returned by add() alias the
// stored tensors, so modules holding them see every update.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::size_t scalar_count() const;
  void zero_grad();

  // Checkpoint directory (named-tensor container). load() requires the same
  // names and shapes, in any order.
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);
  // Deep copy of the values, for comparisons and snapshots.
  std::vector<std::vector<double>> snapshot() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

void init_uniform(Tensor& t, double bound, Rng& rng);
void init_normal(Tensor& t, double stddev, Rng& rng);

}  // namespace flaming

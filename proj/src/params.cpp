#include "flaming/params.hpp"

#include <algorithm>

#include "flaming/errors.hpp"
#include "flaming/tensor_io.hpp"

namespace flaming {

Tensor ParamStore::add(const std::string& name, Shape shape) {
  if (contains(name)) throw ContractError("duplicate parameter name " + name);
  Tensor t(std::move(shape));
  t.set_requires_grad(true);
  entries_.emplace_back(name, t);
  return t;
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ContractError("no parameter named " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

void ParamStore::save(const std::filesystem::path& dir) const { write_named_tensors(dir, entries_); }

void ParamStore::load(const std::filesystem::path& dir) {
  auto loaded = read_named_tensors(dir);
  if (loaded.size() != entries_.size()) {
    throw SchemaError("checkpoint " + dir.string() + " holds " + std::to_string(loaded.size()) +
                      " tensors, model expects " + std::to_string(entries_.size()));
  }
  for (auto& [name, tensor] : entries_) {
    auto it = std::find_if(loaded.begin(), loaded.end(), [&](const auto& e) { return e.first == name; });
    if (it == loaded.end()) throw SchemaError("checkpoint " + dir.string() + " lacks parameter " + name);
    if (it->second.shape() != tensor.shape()) {
      throw SchemaError("checkpoint parameter " + name + " has shape " + shape_string(it->second.shape()) +
                        ", model expects " + shape_string(tensor.shape()));
    }
    auto dst = tensor.mutable_data();
    std::copy(it->second.data().begin(), it->second.data().end(), dst.begin());
  }
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& e : entries_) out.emplace_back(e.second.data().begin(), e.second.data().end());
  return out;
}

void init_uniform(Tensor& t, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.mutable_data()) v = u(rng);
}

void init_normal(Tensor& t, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  for (double& v : t.mutable_data()) v = n(rng);
}

}  // namespace flaming

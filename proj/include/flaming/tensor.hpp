#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flaming {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::uint64_t tape_id = 0;  // 0 for leaves
};

// Shared handle to a dense row-major array of doubles. Copies alias the same
// storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  // Gradient buffer, zero-filled on demand.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<TensorImpl> impl_;
  friend Tensor wrap_impl(std::shared_ptr<TensorImpl> impl);
};

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl);

// Accumulates into the gradient buffer of `impl`, allocating it on first use.
std::span<double> grad_buffer(TensorImpl& impl);

using BackwardFn = std::function<void(std::span<const double> output_grad)>;

// Ordered record of differentiable ops. Every op executed while a tape is
// active on the current thread (see TapeScope) and touching a tensor with
// requires_grad appends one record. backward() may run once per tape.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  void record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
              const std::shared_ptr<TensorImpl>& output, BackwardFn fn);

  // Reverse-mode pass from a scalar produced on this tape. Gradients land in
  // the grad buffers of every requires_grad tensor reachable from `loss`.
  void backward(const Tensor& loss);

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }
  std::uint64_t id() const { return id_; }

 private:
  struct Record {
    std::string_view op;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::shared_ptr<TensorImpl> output;
    BackwardFn fn;
  };
  std::vector<Record> records_;
  std::uint64_t id_;
  bool consumed_ = false;
};

// Tape active on the current thread, or nullptr.
Tape* active_tape();

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

// Suspends recording on the current thread (inference, finite differences).
class NoTapeScope {
 public:
  NoTapeScope();
  NoTapeScope(const NoTapeScope&) = delete;
  NoTapeScope& operator=(const NoTapeScope&) = delete;
  ~NoTapeScope();

 private:
  Tape* previous_;
};

// Runs backward on the tape active on this thread.
void backward(const Tensor& loss);

// Values produced by stop_gradient are constants to the backward pass. For a
// finite-difference oracle to see the same function, those constants must
// also stay fixed while parameters are perturbed: in Record mode every
// stop_gradient output is stored in call order, in Replay mode the stored
// values are returned instead of the freshly computed ones.
class DetachedValueCache {
 public:
  enum class Mode { Record, Replay };

  std::vector<double> pass(std::vector<double> fresh);
  void rewind() { cursor_ = 0; }
  void set_mode(Mode mode) { mode_ = mode; }
  std::size_t size() const { return values_.size(); }

 private:
  Mode mode_ = Mode::Record;
  std::vector<std::vector<double>> values_;
  std::size_t cursor_ = 0;
};

DetachedValueCache* active_detached_cache();

class DetachedCacheScope {
 public:
  DetachedCacheScope(DetachedValueCache& cache, DetachedValueCache::Mode mode);
  DetachedCacheScope(const DetachedCacheScope&) = delete;
  DetachedCacheScope& operator=(const DetachedCacheScope&) = delete;
  ~DetachedCacheScope();

 private:
  DetachedValueCache* previous_;
};

}  // namespace flaming

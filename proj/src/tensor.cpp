#include "flaming/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "flaming/errors.hpp"

namespace flaming {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<TensorImpl>()) {
  check_extents(shape);
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : impl_(std::make_shared<TensorImpl>()) {
  check_extents(shape);
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(values.size()) + " does not match shape " +
                         shape_string(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, value); }

Tensor wrap_impl(std::shared_ptr<TensorImpl> impl) { return Tensor(std::move(impl)); }

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ContractError("undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!impl_) throw ContractError("undefined tensor");
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!impl_) throw ContractError("undefined tensor");
  return grad_buffer(*impl_);
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_) throw ContractError("undefined tensor");
  return grad_buffer(*impl_);
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor out(shape(), std::vector<double>(data().begin(), data().end()));
  out.impl_->requires_grad = impl_->requires_grad;
  return out;
}

std::span<double> grad_buffer(TensorImpl& impl) {
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

namespace {

std::atomic<std::uint64_t> next_tape_id{1};
thread_local Tape* current_tape = nullptr;
thread_local DetachedValueCache* current_cache = nullptr;

}  // namespace

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

Tape::~Tape() = default;

void Tape::record(std::string_view op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                  const std::shared_ptr<TensorImpl>& output, BackwardFn fn) {
  if (consumed_) throw ContractError("recording onto a tape that already ran backward");
  output->tape_id = id_;
  records_.push_back(Record{op, std::move(inputs), output, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward already ran on this tape; run a new forward pass first");
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got " + (loss.defined() ? shape_string(loss.shape()) : "undefined"));
  }
  const auto owner = loss.impl()->tape_id;
  if (owner != 0 && owner != id_) throw ContractError("loss was not produced by this tape");
  consumed_ = true;
  // A loss with no differentiable ancestry leaves every gradient at zero.
  if (!loss.requires_grad()) return;
  grad_buffer(*loss.impl())[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->fn(it->output->grad);
  }
  // Intermediate buffers are no longer needed once the sweep is done.
  for (auto& r : records_) {
    r.fn = nullptr;
    r.inputs.clear();
  }
}

Tape* active_tape() { return current_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
TapeScope::~TapeScope() { current_tape = previous_; }

NoTapeScope::NoTapeScope() : previous_(current_tape) { current_tape = nullptr; }
NoTapeScope::~NoTapeScope() { current_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (!tape) throw ContractError("backward called with no active tape");
  tape->backward(loss);
}

std::vector<double> DetachedValueCache::pass(std::vector<double> fresh) {
  if (mode_ == Mode::Record) {
    values_.push_back(fresh);
    return fresh;
  }
  if (cursor_ >= values_.size() || values_[cursor_].size() != fresh.size()) {
    throw ContractError("detached value replay diverged from the recorded evaluation");
  }
  return values_[cursor_++];
}

DetachedValueCache* active_detached_cache() { return current_cache; }

DetachedCacheScope::DetachedCacheScope(DetachedValueCache& cache, DetachedValueCache::Mode mode)
    : previous_(current_cache) {
  cache.set_mode(mode);
  cache.rewind();
  current_cache = &cache;
}

DetachedCacheScope::~DetachedCacheScope() { current_cache = previous_; }

}  // namespace flaming

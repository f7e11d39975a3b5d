#pragma once

// Dense float64 tensor with a tape-based reverse-mode differentiation core.
//
// A Tensor is a shared handle: copies alias the same storage, which is what
// lets a parameter keep its identity across training steps. Operations record
// themselves on the thread's active Tape only when some input requires a
// gradient; with no active tape they run as plain numeric kernels.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "herald/error.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace herald {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  std::int64_t node_id = -1;
};

inline std::atomic<bool>& finite_checks_flag() {
  static std::atomic<bool> flag{true};
  return flag;
}

}  // namespace detail

// Op outputs on realistic graphs are multi-megabyte buffers. glibc serves those
// with mmap and unmaps them on free, so every op pays fresh page faults; this
// keeps them in the heap for reuse. Executables call it once at startup.
inline void keep_buffers_resident() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

// NaN/Inf policing of every op output. On by default.
inline void set_finite_checks(bool enabled) { detail::finite_checks_flag().store(enabled); }
inline bool finite_checks_enabled() { return detail::finite_checks_flag().load(); }

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    if (shape_numel(shape) != data.size()) {
      throw DimensionError("tensor data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }
  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }
  static Tensor identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.impl_->data[i * n + i] = 1.0;
    return t;
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t m = rows.size();
    const std::size_t n = m ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(m * n);
    for (const auto& row : rows) {
      if (row.size() != n) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({m, n}, std::move(data));
  }
  // Column vector n x 1.
  static Tensor column(std::vector<double> values) {
    const auto n = values.size();
    return Tensor({n, 1}, std::move(values));
  }
  static Tensor parameter(Shape shape, std::vector<double> data) {
    return Tensor(std::move(shape), std::move(data), true);
  }

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const { return impl().shape; }
  std::size_t rank() const { return impl().shape.size(); }
  std::size_t numel() const { return impl().data.size(); }
  bool is_scalar() const { return numel() == 1; }

  // Matrix view: rank 2 as-is, rank 1 as a column, rank 0 as 1x1.
  std::size_t rows() const {
    const auto& s = impl().shape;
    return s.empty() ? 1 : s[0];
  }
  std::size_t cols() const {
    const auto& s = impl().shape;
    return s.size() < 2 ? 1 : s[1];
  }

  std::span<const double> data() const { return impl().data; }
  // Writes bypass the tape; only use on leaves (parameters, constants).
  std::span<double> mutable_data() { return impl().data; }

  double item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
    return impl().data[0];
  }
  double at(std::size_t i, std::size_t j) const { return impl().data[i * cols() + j]; }
  double at(std::size_t i) const { return impl().data[i]; }

  bool requires_grad() const { return impl().requires_grad; }
  bool has_grad() const { return !impl().grad.empty(); }
  // Gradient, or an empty span when none has been accumulated.
  std::span<const double> grad() const { return impl().grad; }
  std::vector<double> grad_or_zeros() const {
    return has_grad() ? impl().grad : std::vector<double>(numel(), 0.0);
  }
  void zero_grad() { impl().grad.clear(); }

  std::int64_t node_id() const { return impl().node_id; }

  // Same values, fresh storage, detached from any tape.
  Tensor clone() const { return Tensor(shape(), impl().data, false); }

  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  detail::TensorImpl& impl() const {
    if (!impl_) throw ContractError("use of an undefined tensor");
    return *impl_;
  }

  std::shared_ptr<detail::TensorImpl> impl_;
};

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

// Ordered record of differentiable operations on one thread.
//
// Constructing a Tape makes it the thread's active tape until it is destroyed;
// tapes nest. backward() walks entries in exact reverse order of recording.
class Tape {
 public:
  // Receives d(loss)/d(output) and the output value itself.
  using BackwardFn =
      std::function<void(std::span<const double> grad_output, std::span<const double> output)>;

  Tape() : previous_(active_slot()) { active_slot() = this; }
  ~Tape() { active_slot() = previous_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_slot(); }

  void record(const Tensor& output, std::vector<Tensor> parents, BackwardFn backward) {
    Entry e;
    e.output = output.handle();
    e.output->node_id = static_cast<std::int64_t>(entries_.size());
    e.parents.reserve(parents.size());
    for (auto& p : parents) e.parents.push_back(p.handle());
    e.backward = std::move(backward);
    entries_.push_back(std::move(e));
  }

  std::size_t size() const { return entries_.size(); }

  // Every recorded parent is either a leaf or an entry recorded earlier.
  bool is_topologically_ordered() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      for (const auto& p : entries_[i].parents) {
        if (p->node_id >= static_cast<std::int64_t>(i)) return false;
        if (p->node_id >= 0 && entries_[static_cast<std::size_t>(p->node_id)].output != p) {
          return false;
        }
      }
    }
    return true;
  }

  // Accumulates d(loss)/d(leaf) into every leaf reachable from loss.
  // Optional visitor receives node ids in the order they are processed.
  void backward(const Tensor& loss, const std::function<void(std::int64_t)>& visit = {}) {
    if (!loss.is_scalar()) {
      throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
    }
    if (consumed_) throw ContractError("backward() already ran on this tape");
    consumed_ = true;
    auto& root = *loss.handle();
    if (!root.requires_grad) return;
    root.grad.assign(1, 1.0);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if (visit) visit(it->output->node_id);
      if (it->output->grad.empty()) continue;
      it->backward(it->output->grad, it->output->data);
    }
  }

 private:
  struct Entry {
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<std::shared_ptr<detail::TensorImpl>> parents;
    BackwardFn backward;
  };

  static Tape*& active_slot() {
    thread_local Tape* slot = nullptr;
    return slot;
  }

  friend class NoGrad;

  std::vector<Entry> entries_;
  Tape* previous_;
  bool consumed_ = false;
};

// Suspends recording on this thread for its lifetime.
class NoGrad {
 public:
  NoGrad() : saved_(Tape::active_slot()) { Tape::active_slot() = nullptr; }
  ~NoGrad() { Tape::active_slot() = saved_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  Tape* saved_;
};

namespace detail {

inline void accumulate(const Tensor& t, std::span<const double> g) {
  auto& impl = *t.handle();
  if (!impl.requires_grad) return;
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) impl.grad[i] += g[i];
}

inline std::vector<double>& grad_buffer(const Tensor& t) {
  auto& impl = *t.handle();
  if (impl.grad.empty()) impl.grad.assign(impl.data.size(), 0.0);
  return impl.grad;
}

// Wraps a freshly computed value, polices it, and records it when needed.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, Tape::BackwardFn backward) {
  if (finite_checks_enabled() && !all_finite(data)) {
    throw NumericalError(std::string("non-finite value produced by ") + op);
  }
  Tensor out(std::move(shape), std::move(data));
  Tape* tape = Tape::active();
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const Tensor& t) { return t.requires_grad(); });
  if (tape != nullptr && needs_grad) {
    out.handle()->requires_grad = true;
    tape->record(out, std::move(inputs), std::move(backward));
  }
  return out;
}

}  // namespace detail

}  // namespace herald

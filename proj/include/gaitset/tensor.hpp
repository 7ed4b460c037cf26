#ifndef GAITSET_TENSOR_HPP_
#define GAITSET_TENSOR_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gaitset/errors.hpp"
#include "gaitset/rng.hpp"

namespace gaitset {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline void check_shape_valid(const Shape& s, const char* who) {
  for (int64_t e : s)
    if (e <= 0) throw ShapeError(std::string(who) + ": non-positive extent in " + shape_str(s));
}

// Flat row-major value block.
template <typename T>
struct Storage {
  Shape shape;
  std::vector<T> data;

  Storage() = default;
  explicit Storage(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {
    check_shape_valid(shape, "Storage");
  }
  Storage(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check_shape_valid(shape, "Storage");
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
      throw ShapeError("Storage: data length " + std::to_string(data.size()) + " does not match " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

// True iff every scalar is finite. Exponent-bit test, vectorizes well.
inline bool all_finite(const float* p, size_t n) {
  uint32_t bad = 0;
  for (size_t i = 0; i < n; ++i) {
    uint32_t u;
    std::memcpy(&u, p + i, 4);
    bad |= static_cast<uint32_t>((u & 0x7f800000u) == 0x7f800000u);
  }
  return bad == 0;
}

inline bool all_finite(const double* p, size_t n) {
  uint64_t bad = 0;
  for (size_t i = 0; i < n; ++i) {
    uint64_t u;
    std::memcpy(&u, p + i, 8);
    bad |= static_cast<uint64_t>((u & 0x7ff0000000000000ull) == 0x7ff0000000000000ull);
  }
  return bad == 0;
}

template <typename T>
void require_finite(const Storage<T>& s, const std::string& where) {
  if (!all_finite(s.data.data(), s.data.size()))
    throw NumericError("non-finite value produced in " + where + " for shape " + shape_str(s.shape));
}

namespace detail {

template <typename T>
struct Node {
  Storage<T> value;
  Storage<T> grad;  // allocated on demand during backward
  bool grad_ready = false;
  bool requires_grad = false;
  bool visited_mark = false;  // scratch flag for the backward sweep
  uint64_t seq = 0;           // creation order; ancestors always have smaller seq
  std::vector<std::shared_ptr<Node<T>>> parents;
  std::function<void(Node<T>&)> backward;  // accumulates into parents' grad

  Storage<T>& ensure_grad() {
    if (!grad_ready) {
      grad = Storage<T>(value.shape);
      grad_ready = true;
    }
    return grad;
  }
};

inline std::atomic<uint64_t>& node_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}

inline thread_local bool grad_mode_enabled = true;

}  // namespace detail

// Disables graph recording in scope (evaluation paths).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode_enabled) { detail::grad_mode_enabled = false; }
  ~NoGradGuard() { detail::grad_mode_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_enabled; }

// Value handle with optional participation in the gradient tape.
// Immutable once created; copies share the underlying node.
template <typename T>
class BasicTensor {
 public:
  using Scalar = T;

  BasicTensor() = default;

  static BasicTensor leaf(Storage<T> storage, bool requires_grad = false) {
    auto node = std::make_shared<detail::Node<T>>();
    node->value = std::move(storage);
    node->requires_grad = requires_grad;
    node->seq = detail::node_counter().fetch_add(1, std::memory_order_relaxed);
    return BasicTensor(std::move(node));
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return leaf(Storage<T>(std::move(shape)), requires_grad);
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    Storage<T> s(std::move(shape));
    std::fill(s.data.begin(), s.data.end(), value);
    return leaf(std::move(s), requires_grad);
  }

  static BasicTensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    return leaf(Storage<T>(std::move(shape), std::move(data)), requires_grad);
  }

  static BasicTensor scalar(T value) { return from_data({1}, {value}); }

  // Uniform in [-bound, bound], deterministic from rng state.
  static BasicTensor uniform(Shape shape, T bound, Rng& rng, bool requires_grad = false) {
    Storage<T> s(std::move(shape));
    for (auto& v : s.data) v = static_cast<T>(rng.uniform_real(-double(bound), double(bound)));
    return leaf(std::move(s), requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->value.shape; }
  int64_t dim(size_t axis) const { return node_->value.shape.at(axis); }
  size_t rank() const { return node_->value.shape.size(); }
  int64_t numel() const { return node_->value.numel(); }
  std::span<const T> data() const { return node_->value.data; }
  const Storage<T>& storage() const { return node_->value; }
  bool requires_grad() const { return node_->requires_grad; }

  T item() const {
    if (numel() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_str(shape()));
    return node_->value.data[0];
  }

  bool has_grad() const { return node_->grad_ready; }
  std::span<const T> grad() const {
    if (!node_->grad_ready) throw ConfigError("Tensor::grad: no gradient recorded; run backward first");
    return node_->grad.data;
  }
  void clear_grad() {
    node_->grad_ready = false;
    node_->grad = Storage<T>{};
  }

  // In-place parameter update, outside any recorded graph (optimizer use).
  std::vector<T>& mutable_data() { return node_->value.data; }

  detail::Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node<T>>& node_ptr() const { return node_; }

  // Builds an op result node. `backward` may be empty for non-differentiable ops.
  static BasicTensor make_op(Storage<T> value, std::vector<BasicTensor> parents,
                             std::function<void(detail::Node<T>&)> backward, const char* name) {
    require_finite(value, name);
    auto node = std::make_shared<detail::Node<T>>();
    node->value = std::move(value);
    bool needs = false;
    if (grad_enabled()) {
      for (const auto& p : parents) needs = needs || p.node_->requires_grad;
    }
    if (needs && backward) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
    node->seq = detail::node_counter().fetch_add(1, std::memory_order_relaxed);
    return BasicTensor(std::move(node));
  }

  // Reverse-mode sweep from a scalar root. Each reachable node is visited
  // exactly once, in reverse creation order; gradients accumulate additively
  // at fan-out points.
  void backward() const {
    if (numel() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(shape()));
    if (!node_->requires_grad)
      throw ConfigError("backward: root does not require grad (graph not recorded?)");

    std::vector<detail::Node<T>*> order;
    std::vector<detail::Node<T>*> stack{node_.get()};
    while (!stack.empty()) {
      detail::Node<T>* n = stack.back();
      stack.pop_back();
      if (n->visited_mark) continue;
      n->visited_mark = true;
      order.push_back(n);
      for (const auto& p : n->parents)
        if (p->requires_grad && !p->visited_mark) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const detail::Node<T>* a, const detail::Node<T>* b) { return a->seq > b->seq; });

    node_->ensure_grad().data[0] = T(1);
    for (detail::Node<T>* n : order) {
      n->visited_mark = false;  // reset for future sweeps
      if (!n->backward) continue;
      if (!n->grad_ready) continue;  // no downstream gradient reached this node
      n->backward(*n);
      if (!all_finite(n->grad.data.data(), n->grad.data.size()))
        throw NumericError("non-finite gradient at node produced for shape " + shape_str(n->value.shape));
    }
  }

 private:
  explicit BasicTensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node<T>> node_;
};

using Tensor = BasicTensor<float>;
using DTensor = BasicTensor<double>;

}  // namespace gaitset

#endif  // GAITSET_TENSOR_HPP_

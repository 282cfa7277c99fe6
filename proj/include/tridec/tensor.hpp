#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tridec/errors.hpp"

namespace tridec {

template <typename S>
class Tape;

inline std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t checked_size(const std::vector<int>& shape) {
  if (shape.empty()) throw InvalidDimension("tensor shape must have at least one dimension");
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw InvalidDimension("tensor dimension must be positive, got shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

/// N-dimensional array of 32- or 64-bit floats in row-major order.
///
/// Copies share the underlying buffer; the buffer address is the tensor's
/// identity on the active tape. mutable_values() copies on write when the
/// buffer is shared, so tensors recorded on a tape are never mutated in place.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape, S fill = S(0), bool requires_grad = false)
      : shape_(std::move(shape)),
        values_(std::make_shared<std::vector<S>>(checked_size(shape_), fill)),
        requires_grad_(requires_grad) {}

  Tensor(std::vector<int> shape, std::vector<S> values, bool requires_grad = false)
      : shape_(std::move(shape)),
        values_(std::make_shared<std::vector<S>>(std::move(values))),
        requires_grad_(requires_grad) {
    if (checked_size(shape_) != values_->size()) {
      throw ShapeError("tensor: shape " + shape_string(shape_) + " does not match " +
                       std::to_string(values_->size()) + " values");
    }
  }

  static Tensor scalar(S v) { return Tensor({1}, std::vector<S>{v}); }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return values_ ? values_->size() : 0; }
  bool defined() const { return static_cast<bool>(values_); }

  std::span<const S> values() const { return {values_->data(), values_->size()}; }
  S item() const {
    if (size() != 1) throw ShapeError("item(): tensor has shape " + shape_string(shape_));
    return (*values_)[0];
  }

  /// Mutable access; clones the buffer first when it is shared (e.g. captured
  /// by a tape node), so recorded forward values stay intact.
  std::vector<S>& mutable_values() {
    if (values_.use_count() > 1) {
      values_ = std::make_shared<std::vector<S>>(*values_);
      node_ = -1;
      tape_serial_ = 0;
    }
    return *values_;
  }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool b) { requires_grad_ = b; }

  bool has_grad() const { return static_cast<bool>(grad_); }
  std::span<const S> grad() const {
    if (!grad_) throw Error("grad(): no gradient present; run backward first");
    return {grad_->data(), grad_->size()};
  }

  /// Buffer identity; leaves are matched to tape nodes through this.
  const void* id() const { return values_.get(); }

  Tensor reshaped(std::vector<int> new_shape) const {
    Tensor t;
    t.shape_ = std::move(new_shape);
    if (checked_size(t.shape_) != size()) {
      throw ShapeError("reshape: " + shape_string(shape_) + " -> " + shape_string(t.shape_) +
                       " changes element count");
    }
    t.values_ = values_;
    t.requires_grad_ = requires_grad_;
    t.grad_ = grad_;
    return t;
  }

 private:
  friend class Tape<S>;

  std::shared_ptr<const std::vector<S>> values_ptr() const { return values_; }

  std::vector<int> shape_;
  std::shared_ptr<std::vector<S>> values_;
  std::shared_ptr<std::vector<S>> grad_;
  bool requires_grad_ = false;
  // Node identity on the tape that produced/registered this tensor.
  mutable std::uint64_t tape_serial_ = 0;
  mutable int node_ = -1;
};

/// Reverse-mode tape. Ops record one node per output in execution order, so
/// record order is a topological order. Rebuilt per training step and
/// consumed by exactly one backward pass.
template <typename S>
class Tape {
 public:
  class GradSink;
  using BackwardFn = std::function<void(std::span<const S> grad_out, GradSink& sink)>;

  Tape() : serial_(next_serial()++) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() {
    if (active_tape() == this) active_tape() = nullptr;
  }

  static Tape* active() { return active_tape(); }

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

  /// True when an op taking `t` as input must be recorded.
  bool tracks(const Tensor<S>& t) const {
    return t.requires_grad_ || (t.tape_serial_ == serial_ && t.node_ >= 0);
  }

  /// Node id for an input tensor, registering a leaf on first sight.
  /// Returns -1 for constants (no grad required, not produced on this tape).
  int input_node(const Tensor<S>& t) {
    if (t.tape_serial_ == serial_ && t.node_ >= 0) return t.node_;
    if (!t.requires_grad_) return -1;
    auto it = leaves_.find(t.id());
    if (it != leaves_.end()) {
      t.tape_serial_ = serial_;
      t.node_ = it->second;
      return it->second;
    }
    Node node;
    node.out_size = t.size();
    node.needs_grad = true;
    nodes_.push_back(std::move(node));
    const int id = static_cast<int>(nodes_.size()) - 1;
    leaves_.emplace(t.id(), id);
    t.tape_serial_ = serial_;
    t.node_ = id;
    return id;
  }

  /// Records an op node and binds it to the output tensor.
  void record(Tensor<S>& out, std::vector<int> parents, BackwardFn backward) {
    Node node;
    node.parents = std::move(parents);
    node.out_size = out.size();
    node.backward = std::move(backward);
    for (int p : node.parents) {
      if (p >= 0 && nodes_[static_cast<std::size_t>(p)].needs_grad) {
        node.needs_grad = true;
        break;
      }
    }
    nodes_.push_back(std::move(node));
    out.tape_serial_ = serial_;
    out.node_ = static_cast<int>(nodes_.size()) - 1;
  }

  /// Accumulation view handed to backward closures.
  class GradSink {
   public:
    GradSink(Tape& tape, const std::vector<int>& parents) : tape_(tape), parents_(parents) {}

    /// Gradient buffer of input slot `i`; empty when that input needs no grad.
    std::span<S> accum(std::size_t i) {
      const int p = parents_[i];
      if (p < 0 || !tape_.nodes_[static_cast<std::size_t>(p)].needs_grad) return {};
      auto& g = tape_.grads_[static_cast<std::size_t>(p)];
      if (g.empty()) g.assign(tape_.nodes_[static_cast<std::size_t>(p)].out_size, S(0));
      return {g.data(), g.size()};
    }

   private:
    Tape& tape_;
    const std::vector<int>& parents_;
  };

  /// Reverse pass from a scalar loss. Populates grad buffers for every
  /// reachable node; `params` are additionally written back into each
  /// tensor's grad slot (zeros when unreachable).
  void backward(const Tensor<S>& loss, std::span<Tensor<S>* const> params = {}) {
    if (consumed_) throw TapeReuse("backward: tape already consumed");
    if (loss.size() != 1) {
      throw NonScalarLoss("backward: loss has shape " + shape_string(loss.shape()));
    }
    consumed_ = true;
    grads_.assign(nodes_.size(), {});
    const bool on_tape = loss.tape_serial_ == serial_ && loss.node_ >= 0;
    if (on_tape) {
      grads_[static_cast<std::size_t>(loss.node_)].assign(1, S(1));
      for (int i = loss.node_; i >= 0; --i) {
        auto& node = nodes_[static_cast<std::size_t>(i)];
        if (!node.backward || grads_[static_cast<std::size_t>(i)].empty()) continue;
        GradSink sink(*this, node.parents);
        node.backward({grads_[static_cast<std::size_t>(i)].data(), grads_[static_cast<std::size_t>(i)].size()},
                      sink);
      }
    }
    for (Tensor<S>* p : params) write_grad(*p);
  }

  /// Gradient of a leaf after backward; zeros when the leaf never
  /// participated or was unreachable from the loss.
  std::vector<S> grad_of(const Tensor<S>& t) const {
    auto it = leaves_.find(t.id());
    if (it != leaves_.end()) {
      const auto& g = grads_[static_cast<std::size_t>(it->second)];
      if (!g.empty()) return g;
    }
    return std::vector<S>(t.size(), S(0));
  }

 private:
  struct Node {
    std::vector<int> parents;
    std::size_t out_size = 0;
    BackwardFn backward;  // empty for leaves
    bool needs_grad = false;
  };

  void write_grad(Tensor<S>& t) { t.grad_ = std::make_shared<std::vector<S>>(grad_of(t)); }

  static Tape*& active_tape() {
    thread_local Tape* current = nullptr;
    return current;
  }
  static std::uint64_t& next_serial() {
    static std::uint64_t serial = 1;
    return serial;
  }

  friend class TapeScope;
  template <typename T>
  friend class TapeScopeFor;

  std::vector<Node> nodes_;
  std::vector<std::vector<S>> grads_;
  std::unordered_map<const void*, int> leaves_;
  std::uint64_t serial_ = 0;
  bool consumed_ = false;

 public:
  /// RAII activation: ops record on the innermost active tape of their
  /// scalar type. One tape per logical thread per training step.
  class Scope {
   public:
    explicit Scope(Tape& tape) : prev_(active_tape()) { active_tape() = &tape; }
    ~Scope() { active_tape() = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };
};

}  // namespace tridec

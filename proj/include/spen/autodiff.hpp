#pragma once

// Reverse-mode automatic differentiation over dense f64 tensors of rank <= 2.
//
// A Tape records every operation of one forward pass (define-by-run). Tensor
// is a cheap handle (tape pointer + node id). Operations whose inputs are all
// constants produce constants and are never visited by the backward pass, so
// parameters outside the tracked groups cost nothing beyond their forward.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spen/error.hpp"
#include "spen/param_store.hpp"

namespace spen {

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSubtract,
  kMultiply,
  kMatMul,
  kConcatCols,
  kRowSoftmax,
  kLog,
  kExp,
  kTanh,
  kSigmoid,
  kHinge,
  kSum,
  kMean,
  kDot,
  kEmbeddingLookup,
  kScale,
  kL1Distance,
  kSliceRows,
  kSliceCols,
  kStackRows,
};

inline constexpr std::array<OpKind, 20> kAllOpKinds = {
    OpKind::kAdd,         OpKind::kSubtract,   OpKind::kMultiply,
    OpKind::kMatMul,      OpKind::kConcatCols, OpKind::kRowSoftmax,
    OpKind::kLog,         OpKind::kExp,        OpKind::kTanh,
    OpKind::kSigmoid,     OpKind::kHinge,      OpKind::kSum,
    OpKind::kMean,        OpKind::kDot,        OpKind::kEmbeddingLookup,
    OpKind::kScale,       OpKind::kL1Distance, OpKind::kSliceRows,
    OpKind::kSliceCols,   OpKind::kStackRows,
};

const char* op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

// Test hook: when set, the backward rule of `kind` is scaled by 1.5 so that
// gradient checks have a negative control. Process-global.
void set_backward_fault(std::optional<OpKind> kind);
std::optional<OpKind> backward_fault();

class Tape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const { return id_; }

  const Shape& shape() const;
  std::span<const double> values() const;
  // Gradient after Tape::backward; empty when the node received none.
  std::span<const double> grad() const;
  bool requires_grad() const;

  double value() const;  // scalar value; throws if not a scalar
  double at(std::size_t r, std::size_t c) const;
  std::size_t rows() const { return shape().rows(); }
  std::size_t cols() const { return shape().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

struct OpAttrs {
  double scalar = 0.0;       // scale factor, log floor
  std::size_t begin = 0;     // slice bounds
  std::size_t end = 0;
  std::vector<std::size_t> indices;  // embedding lookup rows
};

class Tape {
 public:
  // `store` may be null for tapes that only use constants and variables.
  explicit Tape(ParamStore* store = nullptr,
                GroupSet tracked = GroupSet::all());
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> values);
  Tensor constant(Shape shape, std::span<const double> values);
  Tensor scalar(double v) { return constant(Shape::scalar(), {v}); }
  // A free leaf that requires grad (e.g. a relaxed output being probed).
  Tensor variable(Shape shape, std::vector<double> values);
  // Leaf bound to a store entry. Tracked iff its group is in `tracked`.
  Tensor param(std::string_view name);

  // Copy of `x`'s values with no path back to `x`.
  Tensor stop_gradient(Tensor x);

  Tensor apply(OpKind kind, std::span<const Tensor> inputs,
               const OpAttrs& attrs = {});

  // Reverse sweep from a scalar loss. Single use per tape.
  void backward(Tensor loss);
  bool consumed() const { return consumed_; }

  // After backward: accumulate leaf gradients into the bound store entries
  // whose group is in `groups`.
  void accumulate_param_grads(GroupSet groups);

  ParamStore* store() const { return store_; }
  GroupSet tracked() const { return tracked_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Tensor;

  struct Node {
    OpKind kind = OpKind::kLeaf;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<std::uint32_t> inputs;
    OpAttrs attrs;
    bool requires_grad = false;
    std::int32_t param_index = -1;
  };

  Tensor push(Node node);
  Node& node(Tensor t);
  const Node& node(Tensor t) const;
  void backward_node(std::uint32_t id);
  std::vector<double>& grad_of(std::uint32_t id);

  ParamStore* store_;
  GroupSet tracked_;
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Runs the backward sweep and writes d loss / d param into the grad slot of
// every store parameter in `groups` (slots are zeroed first). Parameters
// outside `groups` are left untouched.
void backward(Tensor loss, ParamStore& store, GroupSet groups);

// Op wrappers. Shapes are checked; violations throw Error(kShape) naming
// the op and the offending shapes.
Tensor add(Tensor a, Tensor b);  // b may be a 1 x n row broadcast over rows
Tensor subtract(Tensor a, Tensor b);
Tensor multiply(Tensor a, Tensor b);
Tensor matmul(Tensor a, Tensor b);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_cols(std::initializer_list<Tensor> parts);
Tensor row_softmax(Tensor x);
// Natural log. With floor > 0, inputs below the floor are clamped (zero
// gradient there); with floor == 0 a non-positive input is a domain error.
Tensor log(Tensor x, double floor = 0.0);
Tensor exp(Tensor x);
Tensor tanh(Tensor x);
Tensor sigmoid(Tensor x);
Tensor hinge(Tensor x);  // max(0, x), subgradient 0 at 0
Tensor sum(Tensor x);
Tensor mean(Tensor x);
Tensor dot(Tensor a, Tensor b);
Tensor embedding_lookup(Tensor table, std::span<const std::size_t> rows);
Tensor scale(Tensor x, double s);
Tensor l1_distance(Tensor a, Tensor b);  // sum |a - b|, sign subgradient
Tensor slice_rows(Tensor x, std::size_t begin, std::size_t end);
Tensor slice_cols(Tensor x, std::size_t begin, std::size_t end);
Tensor stack_rows(std::span<const Tensor> rows);

inline Tensor operator+(Tensor a, Tensor b) { return add(a, b); }
inline Tensor operator-(Tensor a, Tensor b) { return subtract(a, b); }
inline Tensor operator*(Tensor a, Tensor b) { return multiply(a, b); }
inline Tensor operator*(double s, Tensor x) { return scale(x, s); }
inline Tensor operator-(Tensor x) { return scale(x, -1.0); }

}  // namespace spen

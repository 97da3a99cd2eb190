#include "spen/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

namespace spen {

namespace {

std::atomic<int> g_fault{-1};

[[noreturn]] void shape_error(OpKind kind, std::span<const Shape> shapes,
                              const std::string& detail = "") {
  std::ostringstream os;
  os << op_name(kind) << ": incompatible shapes";
  for (const auto& s : shapes) os << ' ' << s.str();
  if (!detail.empty()) os << " (" << detail << ')';
  throw Error(ErrorKind::kShape, os.str());
}

bool same_extent(const Shape& a, const Shape& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

Shape rows_by_cols(const Shape& like, std::size_t r, std::size_t c) {
  if (like.rank() == 2 || r != 1) return Shape::matrix(r, c);
  return Shape::vector(c);
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* grow = g + i * n;
    double* orow = out + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
      orow[p] += s;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* grow = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * grow[j];
    }
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSubtract: return "subtract";
    case OpKind::kMultiply: return "elementwise-multiply";
    case OpKind::kMatMul: return "matrix-multiply";
    case OpKind::kConcatCols: return "concat-last-axis";
    case OpKind::kRowSoftmax: return "row-softmax";
    case OpKind::kLog: return "log";
    case OpKind::kExp: return "exp";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kHinge: return "hinge";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kDot: return "dot";
    case OpKind::kEmbeddingLookup: return "embedding-lookup";
    case OpKind::kScale: return "scalar-multiply";
    case OpKind::kL1Distance: return "L1-distance";
    case OpKind::kSliceRows: return "slice-rows";
    case OpKind::kSliceCols: return "slice-cols";
    case OpKind::kStackRows: return "stack-rows";
  }
  return "?";
}

std::optional<OpKind> op_from_name(std::string_view name) {
  for (OpKind k : kAllOpKinds) {
    if (name == op_name(k)) return k;
  }
  return std::nullopt;
}

void set_backward_fault(std::optional<OpKind> kind) {
  g_fault.store(kind ? static_cast<int>(*kind) : -1);
}

std::optional<OpKind> backward_fault() {
  int v = g_fault.load();
  if (v < 0) return std::nullopt;
  return static_cast<OpKind>(v);
}

// ---------------------------------------------------------------- Tensor

const Shape& Tensor::shape() const { return tape_->node(*this).shape; }

std::span<const double> Tensor::values() const {
  return tape_->node(*this).value;
}

std::span<const double> Tensor::grad() const { return tape_->node(*this).grad; }

bool Tensor::requires_grad() const { return tape_->node(*this).requires_grad; }

double Tensor::value() const {
  const auto& n = tape_->node(*this);
  if (n.value.size() != 1) {
    throw Error(ErrorKind::kShape, "value() on non-scalar " + n.shape.str());
  }
  return n.value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const auto& n = tape_->node(*this);
  return n.value[r * n.shape.cols() + c];
}

// ---------------------------------------------------------------- Tape

Tape::Tape(ParamStore* store, GroupSet tracked)
    : store_(store), tracked_(tracked) {
  nodes_.reserve(256);
}

Tape::Node& Tape::node(Tensor t) {
  if (&t.tape() != this) {
    throw Error(ErrorKind::kState, "tensor belongs to a different tape");
  }
  return nodes_[t.id()];
}

const Tape::Node& Tape::node(Tensor t) const {
  if (&t.tape() != this) {
    throw Error(ErrorKind::kState, "tensor belongs to a different tape");
  }
  return nodes_[t.id()];
}

Tensor Tape::push(Node n) {
  if (consumed_) {
    throw Error(ErrorKind::kState, "tape already consumed by backward");
  }
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw Error(ErrorKind::kShape, "constant: " + std::to_string(values.size()) +
                                       " values for shape " + shape.str());
  }
  Node n;
  n.shape = shape;
  n.value = std::move(values);
  return push(std::move(n));
}

Tensor Tape::constant(Shape shape, std::span<const double> values) {
  return constant(shape, std::vector<double>(values.begin(), values.end()));
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(shape, std::move(values));
  nodes_[t.id()].requires_grad = true;
  return t;
}

Tensor Tape::param(std::string_view name) {
  if (store_ == nullptr) {
    throw Error(ErrorKind::kState, "tape has no parameter store");
  }
  auto idx = store_->index_of(name);
  if (idx < 0) throw Error(ErrorKind::kState, "no parameter " + std::string(name));
  const Param& p = store_->at(static_cast<std::size_t>(idx));
  Node n;
  n.shape = p.shape;
  n.value = p.value;
  n.param_index = idx;
  n.requires_grad = tracked_.contains(p.group);
  return push(std::move(n));
}

Tensor Tape::stop_gradient(Tensor x) {
  const Node& src = node(x);
  return constant(src.shape, src.value);
}

std::vector<double>& Tape::grad_of(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor Tape::apply(OpKind kind, std::span<const Tensor> inputs,
                   const OpAttrs& attrs) {
  auto arity = [&](std::size_t want) {
    if (inputs.size() != want) {
      throw Error(ErrorKind::kShape,
                  std::string(op_name(kind)) + ": expected " +
                      std::to_string(want) + " inputs, got " +
                      std::to_string(inputs.size()));
    }
  };
  std::vector<Shape> shapes;
  shapes.reserve(inputs.size());
  for (const auto& t : inputs) {
    if (!t.valid()) throw Error(ErrorKind::kState, "invalid tensor input");
    shapes.push_back(node(t).shape);
  }

  Node out;
  out.kind = kind;
  out.attrs = attrs;
  for (const auto& t : inputs) {
    out.inputs.push_back(t.id());
    out.requires_grad = out.requires_grad || node(t).requires_grad;
  }

  auto val = [&](std::size_t i) -> const std::vector<double>& {
    return nodes_[inputs[i].id()].value;
  };

  switch (kind) {
    case OpKind::kLeaf:
      throw Error(ErrorKind::kState, "leaf is not an operation");

    case OpKind::kAdd:
    case OpKind::kSubtract: {
      arity(2);
      const Shape& a = shapes[0];
      const Shape& b = shapes[1];
      const bool broadcast = !same_extent(a, b) && b.rows() == 1 &&
                             b.cols() == a.cols() && a.rank() == 2;
      if (!same_extent(a, b) && !broadcast) shape_error(kind, shapes);
      const auto& av = val(0);
      const auto& bv = val(1);
      out.shape = a;
      out.value.resize(a.size());
      const std::size_t n = a.cols();
      const double sign = kind == OpKind::kAdd ? 1.0 : -1.0;
      for (std::size_t i = 0; i < av.size(); ++i) {
        out.value[i] = av[i] + sign * bv[broadcast ? i % n : i];
      }
      break;
    }

    case OpKind::kMultiply: {
      arity(2);
      if (!same_extent(shapes[0], shapes[1])) shape_error(kind, shapes);
      const auto& av = val(0);
      const auto& bv = val(1);
      out.shape = shapes[0];
      out.value.resize(av.size());
      for (std::size_t i = 0; i < av.size(); ++i) out.value[i] = av[i] * bv[i];
      break;
    }

    case OpKind::kMatMul: {
      arity(2);
      const Shape& a = shapes[0];
      const Shape& b = shapes[1];
      if (a.rank() == 0 || b.rank() == 0 || a.cols() != b.rows()) {
        shape_error(kind, shapes);
      }
      out.shape = rows_by_cols(a, a.rows(), b.cols());
      out.value.assign(out.shape.size(), 0.0);
      gemm_nn(val(0).data(), val(1).data(), out.value.data(), a.rows(),
              a.cols(), b.cols());
      break;
    }

    case OpKind::kConcatCols: {
      if (inputs.empty()) shape_error(kind, shapes, "no inputs");
      const std::size_t r = shapes[0].rows();
      std::size_t c = 0;
      for (const auto& s : shapes) {
        if (s.rows() != r || s.rank() == 0) shape_error(kind, shapes);
        c += s.cols();
      }
      out.shape = rows_by_cols(shapes[0], r, c);
      out.value.resize(r * c);
      std::size_t off = 0;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const std::size_t ck = shapes[k].cols();
        const auto& v = val(k);
        for (std::size_t i = 0; i < r; ++i) {
          std::copy_n(v.data() + i * ck, ck, out.value.data() + i * c + off);
        }
        off += ck;
      }
      break;
    }

    case OpKind::kRowSoftmax: {
      arity(1);
      const Shape& s = shapes[0];
      if (s.rank() == 0) shape_error(kind, shapes);
      const auto& x = val(0);
      out.shape = s;
      out.value.resize(x.size());
      const std::size_t n = s.cols();
      for (std::size_t i = 0; i < s.rows(); ++i) {
        const double* xr = x.data() + i * n;
        double* yr = out.value.data() + i * n;
        const double mx = *std::max_element(xr, xr + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          yr[j] = std::exp(xr[j] - mx);
          z += yr[j];
        }
        for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
      }
      break;
    }

    case OpKind::kLog: {
      arity(1);
      const auto& x = val(0);
      out.shape = shapes[0];
      out.value.resize(x.size());
      const double floor = attrs.scalar;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x[i];
        if (floor > 0.0) {
          v = std::max(v, floor);
        } else if (!(v > 0.0)) {
          throw Error(ErrorKind::kDomain,
                      "log: non-positive input " + std::to_string(v) +
                          " at index " + std::to_string(i));
        }
        out.value[i] = std::log(v);
      }
      break;
    }

    case OpKind::kExp: {
      arity(1);
      const auto& x = val(0);
      out.shape = shapes[0];
      out.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        out.value[i] = std::exp(x[i]);
        if (!std::isfinite(out.value[i])) {
          throw Error(ErrorKind::kDomain,
                      "exp: overflow for input " + std::to_string(x[i]));
        }
      }
      break;
    }

    case OpKind::kTanh:
    case OpKind::kSigmoid:
    case OpKind::kHinge: {
      arity(1);
      const auto& x = val(0);
      out.shape = shapes[0];
      out.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (kind == OpKind::kTanh) {
          out.value[i] = std::tanh(x[i]);
        } else if (kind == OpKind::kSigmoid) {
          out.value[i] = sigmoid_scalar(x[i]);
        } else {
          out.value[i] = x[i] > 0.0 ? x[i] : 0.0;
        }
      }
      break;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      arity(1);
      const auto& x = val(0);
      double s = 0.0;
      for (double v : x) s += v;
      if (kind == OpKind::kMean) {
        if (x.empty()) shape_error(kind, shapes, "mean of empty tensor");
        s /= static_cast<double>(x.size());
      }
      out.shape = Shape::scalar();
      out.value = {s};
      break;
    }

    case OpKind::kDot:
    case OpKind::kL1Distance: {
      arity(2);
      if (!same_extent(shapes[0], shapes[1])) shape_error(kind, shapes);
      const auto& a = val(0);
      const auto& b = val(1);
      double s = 0.0;
      if (kind == OpKind::kDot) {
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      } else {
        for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      }
      out.shape = Shape::scalar();
      out.value = {s};
      break;
    }

    case OpKind::kEmbeddingLookup: {
      arity(1);
      const Shape& s = shapes[0];
      if (s.rank() != 2) shape_error(kind, shapes, "table must be a matrix");
      const std::size_t e = s.cols();
      for (auto r : attrs.indices) {
        if (r >= s.rows()) {
          shape_error(kind, shapes, "row index " + std::to_string(r) +
                                        " out of range");
        }
      }
      out.shape = Shape::matrix(attrs.indices.size(), e);
      out.value.resize(out.shape.size());
      const auto& table = val(0);
      for (std::size_t i = 0; i < attrs.indices.size(); ++i) {
        std::copy_n(table.data() + attrs.indices[i] * e, e,
                    out.value.data() + i * e);
      }
      break;
    }

    case OpKind::kScale: {
      arity(1);
      const auto& x = val(0);
      out.shape = shapes[0];
      out.value.resize(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) out.value[i] = attrs.scalar * x[i];
      break;
    }

    case OpKind::kSliceRows: {
      arity(1);
      const Shape& s = shapes[0];
      if (attrs.begin >= attrs.end || attrs.end > s.rows()) {
        shape_error(kind, shapes, "rows [" + std::to_string(attrs.begin) + ", " +
                                      std::to_string(attrs.end) + ")");
      }
      const std::size_t n = s.cols();
      out.shape = rows_by_cols(s, attrs.end - attrs.begin, n);
      const auto& x = val(0);
      out.value.assign(x.begin() + static_cast<std::ptrdiff_t>(attrs.begin * n),
                       x.begin() + static_cast<std::ptrdiff_t>(attrs.end * n));
      break;
    }

    case OpKind::kSliceCols: {
      arity(1);
      const Shape& s = shapes[0];
      if (s.rank() == 0 || attrs.begin >= attrs.end || attrs.end > s.cols()) {
        shape_error(kind, shapes, "cols [" + std::to_string(attrs.begin) + ", " +
                                      std::to_string(attrs.end) + ")");
      }
      const std::size_t n = s.cols();
      const std::size_t w = attrs.end - attrs.begin;
      out.shape = rows_by_cols(s, s.rows(), w);
      out.value.resize(s.rows() * w);
      const auto& x = val(0);
      for (std::size_t i = 0; i < s.rows(); ++i) {
        std::copy_n(x.data() + i * n + attrs.begin, w, out.value.data() + i * w);
      }
      break;
    }

    case OpKind::kStackRows: {
      if (inputs.empty()) shape_error(kind, shapes, "no inputs");
      const std::size_t n = shapes[0].cols();
      for (const auto& s : shapes) {
        if (s.rows() != 1 || s.cols() != n) shape_error(kind, shapes);
      }
      out.shape = Shape::matrix(inputs.size(), n);
      out.value.resize(out.shape.size());
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::copy_n(val(k).data(), n, out.value.data() + k * n);
      }
      break;
    }
  }
  return push(std::move(out));
}

void Tape::backward(Tensor loss) {
  if (consumed_) throw Error(ErrorKind::kState, "tape already consumed");
  const Node& l = node(loss);
  if (l.value.size() != 1) {
    throw Error(ErrorKind::kShape, "backward: loss must be scalar, got " +
                                       l.shape.str());
  }
  consumed_ = true;
  if (!l.requires_grad) return;
  grad_of(loss.id())[0] = 1.0;
  for (std::uint32_t id = loss.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (n.kind == OpKind::kLeaf || !n.requires_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

void Tape::backward_node(std::uint32_t id) {
  // Copy what we need: grad_of may reallocate sibling grads, never nodes_.
  const Node& n = nodes_[id];
  const std::vector<double>& g = n.grad;
  const double fault = backward_fault() == n.kind ? 1.5 : 1.0;
  auto needs = [&](std::size_t i) {
    return nodes_[n.inputs[i]].requires_grad;
  };
  auto in_val = [&](std::size_t i) -> const std::vector<double>& {
    return nodes_[n.inputs[i]].value;
  };

  switch (n.kind) {
    case OpKind::kLeaf:
      break;

    case OpKind::kAdd:
    case OpKind::kSubtract: {
      if (needs(0)) {
        auto& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += fault * g[i];
      }
      if (needs(1)) {
        auto& gb = grad_of(n.inputs[1]);
        const double sign = n.kind == OpKind::kAdd ? fault : -fault;
        const std::size_t nb = gb.size();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % nb] += sign * g[i];
      }
      break;
    }

    case OpKind::kMultiply: {
      const auto& a = in_val(0);
      const auto& b = in_val(1);
      if (needs(0)) {
        auto& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += fault * g[i] * b[i];
      }
      if (needs(1)) {
        auto& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += fault * g[i] * a[i];
      }
      break;
    }

    case OpKind::kMatMul: {
      const Shape& sa = nodes_[n.inputs[0]].shape;
      const Shape& sb = nodes_[n.inputs[1]].shape;
      const std::size_t m = sa.rows(), k = sa.cols(), c = sb.cols();
      std::vector<double> gs(g.begin(), g.end());
      if (fault != 1.0) {
        for (auto& v : gs) v *= fault;
      }
      if (needs(0)) {
        gemm_nt(gs.data(), in_val(1).data(), grad_of(n.inputs[0]).data(), m, k,
                c);
      }
      if (needs(1)) {
        gemm_tn(in_val(0).data(), gs.data(), grad_of(n.inputs[1]).data(), m, k,
                c);
      }
      break;
    }

    case OpKind::kConcatCols: {
      const std::size_t r = n.shape.rows();
      const std::size_t c = n.shape.cols();
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const std::size_t ck = nodes_[n.inputs[k]].shape.cols();
        if (needs(k)) {
          auto& gk = grad_of(n.inputs[k]);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ck; ++j) {
              gk[i * ck + j] += fault * g[i * c + off + j];
            }
          }
        }
        off += ck;
      }
      break;
    }

    case OpKind::kRowSoftmax: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const auto& y = n.value;
      const std::size_t c = n.shape.cols();
      for (std::size_t i = 0; i < n.shape.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * y[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          gx[i * c + j] += fault * y[i * c + j] * (g[i * c + j] - s);
        }
      }
      break;
    }

    case OpKind::kLog: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const auto& x = in_val(0);
      const double floor = n.attrs.scalar;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (floor > 0.0 && x[i] < floor) continue;
        gx[i] += fault * g[i] / x[i];
      }
      break;
    }

    case OpKind::kExp:
    case OpKind::kTanh:
    case OpKind::kSigmoid: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const auto& y = n.value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        double d = 0.0;
        if (n.kind == OpKind::kExp) {
          d = y[i];
        } else if (n.kind == OpKind::kTanh) {
          d = 1.0 - y[i] * y[i];
        } else {
          d = y[i] * (1.0 - y[i]);
        }
        gx[i] += fault * g[i] * d;
      }
      break;
    }

    case OpKind::kHinge: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const auto& x = in_val(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (x[i] > 0.0) gx[i] += fault * g[i];
      }
      break;
    }

    case OpKind::kSum:
    case OpKind::kMean: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      double d = fault * g[0];
      if (n.kind == OpKind::kMean) d /= static_cast<double>(gx.size());
      for (auto& v : gx) v += d;
      break;
    }

    case OpKind::kDot: {
      const auto& a = in_val(0);
      const auto& b = in_val(1);
      const double d = fault * g[0];
      if (needs(0)) {
        auto& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += d * b[i];
      }
      if (needs(1)) {
        auto& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] += d * a[i];
      }
      break;
    }

    case OpKind::kL1Distance: {
      const auto& a = in_val(0);
      const auto& b = in_val(1);
      const double d = fault * g[0];
      auto sign = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
      if (needs(0)) {
        auto& ga = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] += d * sign(a[i] - b[i]);
      }
      if (needs(1)) {
        auto& gb = grad_of(n.inputs[1]);
        for (std::size_t i = 0; i < a.size(); ++i) gb[i] -= d * sign(a[i] - b[i]);
      }
      break;
    }

    case OpKind::kEmbeddingLookup: {
      if (!needs(0)) break;
      auto& gt = grad_of(n.inputs[0]);
      const std::size_t e = n.shape.cols();
      for (std::size_t i = 0; i < n.attrs.indices.size(); ++i) {
        double* dst = gt.data() + n.attrs.indices[i] * e;
        for (std::size_t j = 0; j < e; ++j) dst[j] += fault * g[i * e + j];
      }
      break;
    }

    case OpKind::kScale: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const double s = fault * n.attrs.scalar;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
      break;
    }

    case OpKind::kSliceRows: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const std::size_t off = n.attrs.begin * n.shape.cols();
      for (std::size_t i = 0; i < g.size(); ++i) gx[off + i] += fault * g[i];
      break;
    }

    case OpKind::kSliceCols: {
      if (!needs(0)) break;
      auto& gx = grad_of(n.inputs[0]);
      const std::size_t w = n.shape.cols();
      const std::size_t full = nodes_[n.inputs[0]].shape.cols();
      for (std::size_t i = 0; i < n.shape.rows(); ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          gx[i * full + n.attrs.begin + j] += fault * g[i * w + j];
        }
      }
      break;
    }

    case OpKind::kStackRows: {
      const std::size_t c = n.shape.cols();
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        if (!needs(k)) continue;
        auto& gk = grad_of(n.inputs[k]);
        for (std::size_t j = 0; j < c; ++j) gk[j] += fault * g[k * c + j];
      }
      break;
    }
  }
}

void Tape::accumulate_param_grads(GroupSet groups) {
  if (store_ == nullptr) return;
  for (const auto& n : nodes_) {
    if (n.param_index < 0 || !n.requires_grad || n.grad.empty()) continue;
    Param& p = store_->at(static_cast<std::size_t>(n.param_index));
    if (!groups.contains(p.group)) continue;
    if (p.grad.empty()) p.grad.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
  }
}

void backward(Tensor loss, ParamStore& store, GroupSet groups) {
  Tape& tape = loss.tape();
  if (tape.store() != &store) {
    throw Error(ErrorKind::kState, "loss tape is bound to a different store");
  }
  store.zero_grad(groups);
  tape.backward(loss);
  tape.accumulate_param_grads(groups);
}

// ---------------------------------------------------------------- wrappers

namespace {

Tensor unary(OpKind kind, Tensor x, OpAttrs attrs = {}) {
  std::array<Tensor, 1> in{x};
  return x.tape().apply(kind, in, attrs);
}

Tensor binary(OpKind kind, Tensor a, Tensor b) {
  if (&a.tape() != &b.tape()) {
    throw Error(ErrorKind::kState, std::string(op_name(kind)) +
                                       ": inputs on different tapes");
  }
  std::array<Tensor, 2> in{a, b};
  return a.tape().apply(kind, in);
}

}  // namespace

Tensor add(Tensor a, Tensor b) { return binary(OpKind::kAdd, a, b); }
Tensor subtract(Tensor a, Tensor b) { return binary(OpKind::kSubtract, a, b); }
Tensor multiply(Tensor a, Tensor b) { return binary(OpKind::kMultiply, a, b); }
Tensor matmul(Tensor a, Tensor b) { return binary(OpKind::kMatMul, a, b); }
Tensor dot(Tensor a, Tensor b) { return binary(OpKind::kDot, a, b); }
Tensor l1_distance(Tensor a, Tensor b) {
  return binary(OpKind::kL1Distance, a, b);
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw Error(ErrorKind::kShape, "concat-last-axis: no inputs");
  return parts[0].tape().apply(OpKind::kConcatCols, parts);
}

Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw Error(ErrorKind::kShape, "stack-rows: no inputs");
  return rows[0].tape().apply(OpKind::kStackRows, rows);
}

Tensor row_softmax(Tensor x) { return unary(OpKind::kRowSoftmax, x); }
Tensor log(Tensor x, double floor) {
  OpAttrs a;
  a.scalar = floor;
  return unary(OpKind::kLog, x, a);
}
Tensor exp(Tensor x) { return unary(OpKind::kExp, x); }
Tensor tanh(Tensor x) { return unary(OpKind::kTanh, x); }
Tensor sigmoid(Tensor x) { return unary(OpKind::kSigmoid, x); }
Tensor hinge(Tensor x) { return unary(OpKind::kHinge, x); }
Tensor sum(Tensor x) { return unary(OpKind::kSum, x); }
Tensor mean(Tensor x) { return unary(OpKind::kMean, x); }

Tensor scale(Tensor x, double s) {
  OpAttrs a;
  a.scalar = s;
  return unary(OpKind::kScale, x, a);
}

Tensor embedding_lookup(Tensor table, std::span<const std::size_t> rows) {
  OpAttrs a;
  a.indices.assign(rows.begin(), rows.end());
  return unary(OpKind::kEmbeddingLookup, table, std::move(a));
}

Tensor slice_rows(Tensor x, std::size_t begin, std::size_t end) {
  OpAttrs a;
  a.begin = begin;
  a.end = end;
  return unary(OpKind::kSliceRows, x, a);
}

Tensor slice_cols(Tensor x, std::size_t begin, std::size_t end) {
  OpAttrs a;
  a.begin = begin;
  a.end = end;
  return unary(OpKind::kSliceCols, x, a);
}

}  // namespace spen

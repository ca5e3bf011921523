#include "flex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flex {

std::string to_string(Shape s) {
  std::ostringstream out;
  out << s.rows << "x" << s.cols;
  return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor: " + std::to_string(data_.size()) +
                     " values for shape " + to_string(shape_));
  }
}

Tensor Tensor::row(std::vector<double> values) {
  const Shape s{1, values.size()};
  return Tensor(s, std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParam: return "param";
    case OpKind::kParamRow: return "param_row";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kStack: return "stack";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kLogSigmoid: return "log_sigmoid";
    case OpKind::kSoftmaxGroup: return "softmax_group";
    case OpKind::kMin: return "min";
    case OpKind::kMax: return "max";
    case OpKind::kSum: return "sum";
    case OpKind::kSumRows: return "sum_rows";
    case OpKind::kAbs: return "abs";
    case OpKind::kScale: return "scale";
    case OpKind::kClamp: return "clamp";
  }
  return "unknown";
}

namespace {

constexpr double kLogFloor = 1e-12;

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(Node n) {
  for (double v : n.value.data()) {
    if (!std::isfinite(v)) {
      std::string what = "non-finite value produced by op '";
      what += op_name(n.kind);
      what += "'";
      if (n.param != nullptr) what += " (param " + n.param->name + ")";
      throw NonFiniteError(what);
    }
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::require_same_shape(OpKind op, Var a, Var b) const {
  const Shape sa = node(a).value.shape();
  const Shape sb = node(b).value.shape();
  if (sa != sb) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " +
                     to_string(sa) + " vs " + to_string(sb));
  }
}

void Tape::require_row(OpKind op, Var a) const {
  const Shape s = node(a).value.shape();
  if (s.rows != 1) {
    throw ShapeError(std::string(op_name(op)) + ": expected row vector, got " +
                     to_string(s));
  }
}

double Tape::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.size() != 1) {
    throw ShapeError("scalar: node has shape " + to_string(t.shape()));
  }
  return t[0];
}

Var Tape::constant(Tensor value) {
  return push(Node{OpKind::kConstant, {}, std::move(value), {}});
}

Var Tape::param(Param& p) {
  Node n{OpKind::kParam, {}, p.value, {}};
  n.param = &p;
  return push(std::move(n));
}

Var Tape::param_row(Param& p, std::size_t row) {
  if (row >= p.value.rows()) {
    throw ShapeError("param_row: row " + std::to_string(row) +
                     " out of range for " + p.name + " (" +
                     to_string(p.value.shape()) + ")");
  }
  const auto src = p.value.row_span(row);
  Node n{OpKind::kParamRow, {},
         Tensor({1, src.size()}, std::vector<double>(src.begin(), src.end())),
         {}};
  n.param = &p;
  n.row = row;
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same_shape(OpKind::kAdd, a, b);
  Tensor out = node(a).value;
  const Tensor& vb = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return push(Node{OpKind::kAdd, {a.id, b.id}, std::move(out), {}});
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(OpKind::kSub, a, b);
  Tensor out = node(a).value;
  const Tensor& vb = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  return push(Node{OpKind::kSub, {a.id, b.id}, std::move(out), {}});
}

Var Tape::mul(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  if (va.shape() == vb.shape()) {
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(Node{OpKind::kMul, {a.id, b.id}, std::move(out), {}});
  }
  // scalar x tensor is the only broadcast allowed
  if (va.size() == 1 || vb.size() == 1) {
    const bool a_scalar = va.size() == 1;
    const double s = a_scalar ? va[0] : vb[0];
    Tensor out = a_scalar ? vb : va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return push(Node{OpKind::kMul, {a.id, b.id}, std::move(out), {}});
  }
  throw ShapeError("mul: shape mismatch " + to_string(va.shape()) + " vs " +
                   to_string(vb.shape()));
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& va = node(a).value;
  const Tensor& vb = node(b).value;
  if (va.cols() != vb.rows()) {
    throw ShapeError("matmul: inner dimensions differ " +
                     to_string(va.shape()) + " x " + to_string(vb.shape()));
  }
  const std::size_t m = va.rows(), k = va.cols(), n = vb.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = va.at(i, p);
      if (aip == 0.0) continue;
      const double* brow = vb.data().data() + p * n;
      double* orow = out.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return push(Node{OpKind::kMatmul, {a.id, b.id}, std::move(out), {}});
}

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  for (Var p : parts) {
    require_row(OpKind::kConcat, p);
    const auto d = node(p).value.data();
    out.insert(out.end(), d.begin(), d.end());
    ids.push_back(p.id);
  }
  return push(Node{OpKind::kConcat, std::move(ids), Tensor::row(std::move(out)),
                   {}});
}

Var Tape::slice(Var a, std::size_t begin, std::size_t len) {
  require_row(OpKind::kSlice, a);
  const Tensor& va = node(a).value;
  if (begin + len > va.cols() || len == 0) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + len) + ") outside " +
                     to_string(va.shape()));
  }
  const auto d = va.data().subspan(begin, len);
  Node n{OpKind::kSlice, {a.id}, Tensor::row({d.begin(), d.end()}), {}};
  n.row = begin;
  return push(std::move(n));
}

Var Tape::stack(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  const std::size_t width = node(rows[0]).value.cols();
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  for (Var r : rows) {
    require_row(OpKind::kStack, r);
    if (node(r).value.cols() != width) {
      throw ShapeError("stack: row widths differ " + std::to_string(width) +
                       " vs " + std::to_string(node(r).value.cols()));
    }
    const auto d = node(r).value.data();
    out.insert(out.end(), d.begin(), d.end());
    ids.push_back(r.id);
  }
  return push(Node{OpKind::kStack, std::move(ids),
                   Tensor({rows.size(), width}, std::move(out)), {}});
}

template <typename F>
Var Tape::unary(OpKind op, Var a, F f) {
  Tensor out = node(a).value;
  for (double& v : out.data()) v = f(v);
  return push(Node{op, {a.id}, std::move(out), {}});
}

Var Tape::tanh(Var a) {
  return unary(OpKind::kTanh, a, [](double x) { return std::tanh(x); });
}
Var Tape::sigmoid(Var a) {
  return unary(OpKind::kSigmoid, a, sigmoid_value);
}
Var Tape::relu(Var a) {
  return unary(OpKind::kRelu, a, [](double x) { return x > 0 ? x : 0.0; });
}
Var Tape::exp(Var a) {
  return unary(OpKind::kExp, a, [](double x) { return std::exp(x); });
}
Var Tape::log(Var a) {
  return unary(OpKind::kLog, a,
               [](double x) { return std::log(std::max(x, kLogFloor)); });
}
Var Tape::log_sigmoid(Var a) {
  return unary(OpKind::kLogSigmoid, a, [](double x) {
    return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x)));
  });
}
Var Tape::abs(Var a) {
  return unary(OpKind::kAbs, a, [](double x) { return std::abs(x); });
}

Var Tape::clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ShapeError("clamp: empty range");
  Tensor out = node(a).value;
  for (double& v : out.data()) v = std::clamp(v, lo, hi);
  Node n{OpKind::kClamp, {a.id}, std::move(out), {}};
  n.scalar = lo;
  n.upper = hi;
  return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
  Tensor out = node(a).value;
  for (double& v : out.data()) v *= s;
  Node n{OpKind::kScale, {a.id}, std::move(out), {}};
  n.scalar = s;
  return push(std::move(n));
}

Var Tape::softmax_group(Var a) {
  const Tensor& va = node(a).value;
  const std::size_t k = va.rows(), n = va.cols();
  if (k == 0) throw ShapeError("softmax_group: empty group");
  Tensor out(va.shape());
  for (std::size_t c = 0; c < n; ++c) {
    double mx = va.at(0, c);
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, va.at(i, c));
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      out.at(i, c) = std::exp(va.at(i, c) - mx);
      z += out.at(i, c);
    }
    for (std::size_t i = 0; i < k; ++i) out.at(i, c) /= z;
  }
  return push(Node{OpKind::kSoftmaxGroup, {a.id}, std::move(out), {}});
}

Var Tape::min(Var a, Var b) {
  require_same_shape(OpKind::kMin, a, b);
  Tensor out = node(a).value;
  const Tensor& vb = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], vb[i]);
  return push(Node{OpKind::kMin, {a.id, b.id}, std::move(out), {}});
}

Var Tape::max(Var a, Var b) {
  require_same_shape(OpKind::kMax, a, b);
  Tensor out = node(a).value;
  const Tensor& vb = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], vb[i]);
  return push(Node{OpKind::kMax, {a.id, b.id}, std::move(out), {}});
}

Var Tape::sum(Var a) {
  double s = 0.0;
  for (double v : node(a).value.data()) s += v;
  return push(Node{OpKind::kSum, {a.id}, Tensor::scalar(s), {}});
}

Var Tape::sum_rows(Var a) {
  const Tensor& va = node(a).value;
  Tensor out({1, va.cols()});
  for (std::size_t i = 0; i < va.rows(); ++i) {
    for (std::size_t c = 0; c < va.cols(); ++c) out[c] += va.at(i, c);
  }
  return push(Node{OpKind::kSumRows, {a.id}, std::move(out), {}});
}

void Tape::backward(Var loss) {
  if (node(loss).value.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got " +
                     to_string(node(loss).value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor(n.value.shape());
  nodes_[loss.id].grad[0] = 1.0;

  for (std::size_t idx = loss.id + 1; idx-- > 0;) {
    Node& n = nodes_[idx];
    const Tensor& g = n.grad;
    const Tensor& y = n.value;
    auto in_grad = [&](std::size_t k) -> Tensor& {
      return nodes_[n.inputs[k]].grad;
    };
    auto in_value = [&](std::size_t k) -> const Tensor& {
      return nodes_[n.inputs[k]].value;
    };
    switch (n.kind) {
      case OpKind::kConstant:
        break;
      case OpKind::kParam: {
        Tensor& pg = n.param->grad;
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }
      case OpKind::kParamRow: {
        auto pg = n.param->grad.row_span(n.row);
        for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        break;
      }
      case OpKind::kAdd: {
        Tensor& ga = in_grad(0);
        Tensor& gb = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case OpKind::kSub: {
        Tensor& ga = in_grad(0);
        Tensor& gb = in_grad(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case OpKind::kMul: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        Tensor& ga = in_grad(0);
        Tensor& gb = in_grad(1);
        if (a.shape() == b.shape()) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * b[i];
            gb[i] += g[i] * a[i];
          }
        } else if (a.size() == 1) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[0] += g[i] * b[i];
            gb[i] += g[i] * a[0];
          }
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * b[0];
            gb[0] += g[i] * a[i];
          }
        }
        break;
      }
      case OpKind::kMatmul: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        Tensor& ga = in_grad(0);
        Tensor& gb = in_grad(1);
        const std::size_t m = a.rows(), k = a.cols(), cols = b.cols();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double aip = a.at(i, p);
            for (std::size_t j = 0; j < cols; ++j) {
              const double gij = g.at(i, j);
              acc += gij * b.at(p, j);
              gb.at(p, j) += aip * gij;
            }
            ga.at(i, p) += acc;
          }
        }
        break;
      }
      case OpKind::kConcat: {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Tensor& gk = in_grad(k);
          for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[offset + i];
          offset += gk.size();
        }
        break;
      }
      case OpKind::kSlice: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[n.row + i] += g[i];
        break;
      }
      case OpKind::kStack: {
        const std::size_t width = y.cols();
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          Tensor& gk = in_grad(k);
          for (std::size_t i = 0; i < width; ++i) gk[i] += g.at(k, i);
        }
        break;
      }
      case OpKind::kTanh: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * (1.0 - y[i] * y[i]);
        }
        break;
      }
      case OpKind::kSigmoid: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * y[i] * (1.0 - y[i]);
        }
        break;
      }
      case OpKind::kRelu: {
        const Tensor& a = in_value(0);
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0) ga[i] += g[i];
        }
        break;
      }
      case OpKind::kExp: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        break;
      }
      case OpKind::kLog: {
        const Tensor& a = in_value(0);
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > kLogFloor) ga[i] += g[i] / a[i];
        }
        break;
      }
      case OpKind::kLogSigmoid: {
        const Tensor& a = in_value(0);
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * sigmoid_value(-a[i]);
        }
        break;
      }
      case OpKind::kSoftmaxGroup: {
        Tensor& ga = in_grad(0);
        for (std::size_t c = 0; c < y.cols(); ++c) {
          double dot = 0.0;
          for (std::size_t i = 0; i < y.rows(); ++i) dot += g.at(i, c) * y.at(i, c);
          for (std::size_t i = 0; i < y.rows(); ++i) {
            ga.at(i, c) += y.at(i, c) * (g.at(i, c) - dot);
          }
        }
        break;
      }
      case OpKind::kMin:
      case OpKind::kMax: {
        const Tensor& a = in_value(0);
        const Tensor& b = in_value(1);
        Tensor& ga = in_grad(0);
        Tensor& gb = in_grad(1);
        const bool is_min = n.kind == OpKind::kMin;
        for (std::size_t i = 0; i < g.size(); ++i) {
          // ties go to the first argument
          const bool first = is_min ? a[i] <= b[i] : a[i] >= b[i];
          (first ? ga : gb)[i] += g[i];
        }
        break;
      }
      case OpKind::kSum: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        break;
      }
      case OpKind::kSumRows: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < ga.rows(); ++i) {
          for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(i, c) += g[c];
        }
        break;
      }
      case OpKind::kClamp: {
        const Tensor& a = in_value(0);
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] >= n.scalar && a[i] <= n.upper) ga[i] += g[i];
        }
        break;
      }
      case OpKind::kAbs: {
        const Tensor& a = in_value(0);
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (a[i] > 0) {
            ga[i] += g[i];
          } else if (a[i] < 0) {
            ga[i] -= g[i];
          }
        }
        break;
      }
      case OpKind::kScale: {
        Tensor& ga = in_grad(0);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
    }
  }
}

double grad_check(const ScalarFn& f, std::span<Param* const> params,
                  double h) {
  if (!(h > 0)) throw std::invalid_argument("grad_check: step must be > 0");
  for (Param* p : params) p->zero_grad();
  {
    Tape tape;
    const Var loss = f(tape);
    tape.backward(loss);
  }
  auto evaluate = [&] {
    Tape tape;
    return tape.scalar(f(tape));
  };

  double worst = 0.0;
  for (Param* p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      const double up = evaluate();
      p->value[i] = saved - h;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
    p->zero_grad();
  }
  return worst;
}

}  // namespace flex

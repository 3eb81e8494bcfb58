/*
 * Copyright 2026 The uqlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "uqlab/diffcore/tape.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace uqlab::diff {

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kVariable: return "variable";
    case OpKind::kConstant: return "constant";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kNeg: return "neg";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kSquare: return "square";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kCos: return "cos";
    case OpKind::kSin: return "sin";
    case OpKind::kAbs: return "abs";
    case OpKind::kLgamma: return "lgamma";
    case OpKind::kDigamma: return "digamma";
    case OpKind::kTrigamma: return "trigamma";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSum: return "sum";
    case OpKind::kSumTo: return "sum_to";
    case OpKind::kBroadcastTo: return "broadcast_to";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kScatterAddRows: return "scatter_add_rows";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kPadCols: return "pad_cols";
  }
  return "unknown";
}

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw DomainError("use of an empty Var");
  return tape_->node(id_).value;
}

double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw DomainError("scalar() on a " + std::to_string(v.rows()) + "x" +
                      std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

int Var::order() const { return tape_->node(id_).order; }

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Tape* common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw DomainError("use of an empty Var");
  if (a.tape() != b.tape()) throw DomainError("operands live on different tapes");
  return a.tape();
}

Index broadcast_dim(Index x, Index y, OpKind op) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  throw DomainError(std::string("incompatible shapes for ") + op_name(op));
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
  if (m.rows() == rows && m.cols() == cols) return m;
  return m.replicate(rows / m.rows(), cols / m.cols());
}

template <class F>
Matrix broadcast_apply(const Matrix& a, const Matrix& b, OpKind op, F f) {
  const Index r = broadcast_dim(a.rows(), b.rows(), op);
  const Index c = broadcast_dim(a.cols(), b.cols(), op);
  if (a.rows() == r && a.cols() == c && b.rows() == r && b.cols() == c) {
    return f(a.array(), b.array()).matrix();
  }
  const Matrix ea = expand(a, r, c);
  const Matrix eb = expand(b, r, c);
  return f(ea.array(), eb.array()).matrix();
}

Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  if (rows == 1 && cols == 1) return Matrix::Constant(1, 1, g.sum());
  if (rows == 1 && cols == g.cols()) return g.colwise().sum();
  if (cols == 1 && rows == g.rows()) return g.rowwise().sum();
  throw DomainError("cannot reduce " + shape_str(g) + " to " +
                    std::to_string(rows) + "x" + std::to_string(cols));
}

double softplus_scalar(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Matrix map(const Matrix& a, double (*f)(double)) {
  return a.unaryExpr([f](double x) { return f(x); });
}

double lgamma_scalar(double x) { return std::lgamma(x); }
double digamma_scalar(double x) { return boost::math::digamma(x); }
double trigamma_scalar(double x) { return boost::math::trigamma(x); }
double sign_scalar(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_index(const IndexList& index, Index bound, const char* op) {
  for (Index k : index) {
    if (k < 0 || k >= bound) {
      throw DomainError(std::string(op) + ": row index " + std::to_string(k) +
                        " out of range " + std::to_string(bound));
    }
  }
}

Matrix gather_values(const Matrix& a, const IndexList& index) {
  Matrix out(static_cast<Index>(index.size()), a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) out.row(k) = a.row(index[k]);
  return out;
}

Matrix scatter_values(const Matrix& a, const IndexList& index, Index rows) {
  Matrix out = Matrix::Zero(rows, a.cols());
  for (std::size_t k = 0; k < index.size(); ++k) out.row(index[k]) += a.row(k);
  return out;
}

Matrix pad_values(const Matrix& a, Index start, Index total) {
  Matrix out = Matrix::Zero(a.rows(), total);
  out.middleCols(start, a.cols()) = a;
  return out;
}

}  // namespace

Var Tape::push(OpKind op, Matrix value, std::initializer_list<Var> parents,
               double scalar, Index aux0, Index aux1,
               std::shared_ptr<const IndexList> index) {
  if (!value.allFinite()) {
    throw NumericError(std::string("non-finite value produced by ") +
                       op_name(op) + " (node " +
                       std::to_string(nodes_.size()) + ")");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.order = order_floor_;
  n.requires_grad = op == OpKind::kVariable;
  n.scalar = scalar;
  n.aux0 = aux0;
  n.aux1 = aux1;
  n.index = std::move(index);
  for (Var p : parents) {
    if (p.tape() != this) throw DomainError("operand from a different tape");
    const Node& pn = nodes_[p.id()];
    n.parents[n.n_parents++] = p.id();
    n.order = std::max(n.order, pn.order);
    n.requires_grad = n.requires_grad || pn.requires_grad;
  }
  bytes_ += static_cast<std::size_t>(n.value.size()) * sizeof(double);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  return push(OpKind::kVariable, std::move(value), {});
}
Var Tape::constant(Matrix value) {
  return push(OpKind::kConstant, std::move(value), {});
}
Var Tape::variable(double value) {
  return variable(Matrix::Constant(1, 1, value));
}
Var Tape::constant(double value) {
  return constant(Matrix::Constant(1, 1, value));
}

std::vector<char> Tape::reachable_from(std::size_t output,
                                       std::span<const Var> wrt) const {
  std::vector<char> reach(output + 1, 0);
  std::size_t first = output + 1;
  for (Var w : wrt) {
    if (w.tape() != this) throw DomainError("wrt Var from a different tape");
    if (w.id() <= output) {
      reach[w.id()] = 1;
      first = std::min(first, w.id());
    }
  }
  for (std::size_t i = first; i <= output; ++i) {
    if (reach[i]) continue;
    const Node& n = nodes_[i];
    for (std::uint8_t k = 0; k < n.n_parents; ++k) {
      if (reach[n.parents[k]]) {
        reach[i] = 1;
        break;
      }
    }
  }
  return reach;
}

std::vector<Matrix> Tape::grad(Var output, std::span<const Var> wrt) const {
  if (output.tape() != this) throw DomainError("output from a different tape");
  const Node& out = nodes_[output.id()];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw DomainError("grad() needs a scalar output, got " +
                      shape_str(out.value));
  }
  if (out.order >= 2) {
    throw DepthError(
        "nesting depth exceeded: differentiating a second-order graph");
  }
  const std::size_t last = output.id();
  const std::vector<char> reach = reachable_from(last, wrt);
  std::vector<Matrix> g(last + 1);
  std::vector<char> has(last + 1, 0);
  g[last] = Matrix::Ones(1, 1);
  has[last] = 1;

  auto accumulate = [&](std::size_t id, Matrix contribution, OpKind op) {
    if (!reach[id]) return;
    if (!contribution.allFinite()) {
      throw NumericError(std::string("non-finite gradient through ") +
                         op_name(op) + " into node " + std::to_string(id));
    }
    if (has[id]) {
      g[id] += contribution;
    } else {
      g[id] = std::move(contribution);
      has[id] = 1;
    }
  };

  for (std::size_t i = last + 1; i-- > 0;) {
    if (!has[i] || !reach[i]) continue;
    const Node& n = nodes_[i];
    if (n.n_parents == 0) continue;
    const Matrix& gi = g[i];
    const Matrix& y = n.value;
    const std::size_t pa = n.parents[0];
    const std::size_t pb = n.parents[1];
    const Matrix& a = nodes_[pa].value;
    switch (n.op) {
      case OpKind::kAdd:
        accumulate(pa, reduce_to(gi, a.rows(), a.cols()), n.op);
        accumulate(pb, reduce_to(gi, nodes_[pb].value.rows(),
                                 nodes_[pb].value.cols()),
                   n.op);
        break;
      case OpKind::kSub:
        accumulate(pa, reduce_to(gi, a.rows(), a.cols()), n.op);
        accumulate(pb, reduce_to(-gi, nodes_[pb].value.rows(),
                                 nodes_[pb].value.cols()),
                   n.op);
        break;
      case OpKind::kMul: {
        const Matrix& b = nodes_[pb].value;
        if (reach[pa]) {
          accumulate(pa,
                     reduce_to(broadcast_apply(gi, b, n.op,
                                               [](auto x, auto z) { return x * z; }),
                               a.rows(), a.cols()),
                     n.op);
        }
        if (reach[pb]) {
          accumulate(pb,
                     reduce_to(broadcast_apply(gi, a, n.op,
                                               [](auto x, auto z) { return x * z; }),
                               b.rows(), b.cols()),
                     n.op);
        }
        break;
      }
      case OpKind::kDiv: {
        const Matrix& b = nodes_[pb].value;
        if (reach[pa]) {
          accumulate(pa,
                     reduce_to(broadcast_apply(gi, b, n.op,
                                               [](auto x, auto z) { return x / z; }),
                               a.rows(), a.cols()),
                     n.op);
        }
        if (reach[pb]) {
          // d(a/b)/db = -y/b
          const Matrix gy = (gi.array() * y.array()).matrix();
          accumulate(pb,
                     reduce_to(broadcast_apply(gy, b, n.op,
                                               [](auto x, auto z) { return -x / z; }),
                               b.rows(), b.cols()),
                     n.op);
        }
        break;
      }
      case OpKind::kNeg:
        accumulate(pa, -gi, n.op);
        break;
      case OpKind::kScale:
        accumulate(pa, n.scalar * gi, n.op);
        break;
      case OpKind::kAddScalar:
        accumulate(pa, gi, n.op);
        break;
      case OpKind::kSquare:
        accumulate(pa, (2.0 * gi.array() * a.array()).matrix(), n.op);
        break;
      case OpKind::kSqrt:
        accumulate(pa, (0.5 * gi.array() / y.array()).matrix(), n.op);
        break;
      case OpKind::kExp:
        accumulate(pa, (gi.array() * y.array()).matrix(), n.op);
        break;
      case OpKind::kLog:
        accumulate(pa, (gi.array() / a.array()).matrix(), n.op);
        break;
      case OpKind::kTanh:
        accumulate(pa, (gi.array() * (1.0 - y.array().square())).matrix(),
                   n.op);
        break;
      case OpKind::kSigmoid:
        accumulate(pa, (gi.array() * y.array() * (1.0 - y.array())).matrix(),
                   n.op);
        break;
      case OpKind::kSoftplus:
        accumulate(pa, (gi.array() * map(a, sigmoid_scalar).array()).matrix(),
                   n.op);
        break;
      case OpKind::kCos:
        accumulate(pa, (-gi.array() * a.array().sin()).matrix(), n.op);
        break;
      case OpKind::kSin:
        accumulate(pa, (gi.array() * a.array().cos()).matrix(), n.op);
        break;
      case OpKind::kAbs:
        accumulate(pa, (gi.array() * map(a, sign_scalar).array()).matrix(),
                   n.op);
        break;
      case OpKind::kLgamma:
        accumulate(pa, (gi.array() * map(a, digamma_scalar).array()).matrix(),
                   n.op);
        break;
      case OpKind::kDigamma:
        accumulate(pa,
                   (gi.array() * map(a, trigamma_scalar).array()).matrix(),
                   n.op);
        break;
      case OpKind::kTrigamma:
        throw DomainError("trigamma is not differentiable");
      case OpKind::kMatMul: {
        const Matrix& b = nodes_[pb].value;
        if (reach[pa]) accumulate(pa, gi * b.transpose(), n.op);
        if (reach[pb]) accumulate(pb, a.transpose() * gi, n.op);
        break;
      }
      case OpKind::kTranspose:
        accumulate(pa, gi.transpose(), n.op);
        break;
      case OpKind::kSum:
        accumulate(pa, Matrix::Constant(a.rows(), a.cols(), gi(0, 0)), n.op);
        break;
      case OpKind::kSumTo:
        accumulate(pa, expand(gi, a.rows(), a.cols()), n.op);
        break;
      case OpKind::kBroadcastTo:
        accumulate(pa, reduce_to(gi, a.rows(), a.cols()), n.op);
        break;
      case OpKind::kGatherRows:
        accumulate(pa, scatter_values(gi, *n.index, a.rows()), n.op);
        break;
      case OpKind::kScatterAddRows:
        accumulate(pa, gather_values(gi, *n.index), n.op);
        break;
      case OpKind::kConcatCols: {
        const Index ca = a.cols();
        const Index cb = nodes_[pb].value.cols();
        if (reach[pa]) accumulate(pa, gi.leftCols(ca), n.op);
        if (reach[pb]) accumulate(pb, gi.middleCols(ca, cb), n.op);
        break;
      }
      case OpKind::kSliceCols:
        accumulate(pa, pad_values(gi, n.aux0, a.cols()), n.op);
        break;
      case OpKind::kPadCols:
        accumulate(pa, gi.middleCols(n.aux0, a.cols()), n.op);
        break;
      case OpKind::kVariable:
      case OpKind::kConstant:
        break;
    }
  }

  std::vector<Matrix> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id() <= last && has[w.id()]) {
      result.push_back(g[w.id()]);
    } else {
      const Matrix& v = nodes_[w.id()].value;
      result.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
  }
  return result;
}

std::vector<Var> Tape::grad_graph(Var output, std::span<const Var> wrt) {
  if (output.tape() != this) throw DomainError("output from a different tape");
  const Node& out = nodes_[output.id()];
  if (out.value.rows() != 1 || out.value.cols() != 1) {
    throw DomainError("grad_graph() needs a scalar output, got " +
                      shape_str(out.value));
  }
  if (out.order >= 1) {
    throw DepthError(
        "nesting depth exceeded: only two levels of differentiation are "
        "supported");
  }
  const std::size_t last = output.id();
  const std::vector<char> reach = reachable_from(last, wrt);
  std::vector<Var> g(last + 1);
  std::vector<char> has(last + 1, 0);

  struct FloorGuard {
    Tape* tape;
    std::uint8_t saved;
    ~FloorGuard() { tape->order_floor_ = saved; }
  } guard{this, order_floor_};
  order_floor_ = static_cast<std::uint8_t>(out.order + 1);

  g[last] = constant(1.0);
  has[last] = 1;

  auto accumulate = [&](std::size_t id, Var contribution) {
    if (!reach[id]) return;
    if (has[id]) {
      g[id] = g[id] + contribution;
    } else {
      g[id] = contribution;
      has[id] = 1;
    }
  };
  auto reduce = [](Var v, std::size_t like, const Tape& t) {
    const Matrix& m = t.node(like).value;
    return sum_to(v, m.rows(), m.cols());
  };

  for (std::size_t i = last + 1; i-- > 0;) {
    if (!has[i] || !reach[i]) continue;
    const Node& n = nodes_[i];
    if (n.n_parents == 0) continue;
    const Var gi = g[i];
    const Var y = handle(i);
    const std::size_t pa = n.parents[0];
    const std::size_t pb = n.parents[1];
    const Var a = handle(pa);
    const Var b = n.n_parents > 1 ? handle(pb) : Var();
    switch (n.op) {
      case OpKind::kAdd:
        accumulate(pa, reduce(gi, pa, *this));
        accumulate(pb, reduce(gi, pb, *this));
        break;
      case OpKind::kSub:
        accumulate(pa, reduce(gi, pa, *this));
        if (reach[pb]) accumulate(pb, reduce(-gi, pb, *this));
        break;
      case OpKind::kMul:
        if (reach[pa]) accumulate(pa, reduce(gi * b, pa, *this));
        if (reach[pb]) accumulate(pb, reduce(gi * a, pb, *this));
        break;
      case OpKind::kDiv:
        if (reach[pa]) accumulate(pa, reduce(gi / b, pa, *this));
        if (reach[pb]) accumulate(pb, reduce(-(gi * y) / b, pb, *this));
        break;
      case OpKind::kNeg:
        accumulate(pa, -gi);
        break;
      case OpKind::kScale:
        accumulate(pa, n.scalar * gi);
        break;
      case OpKind::kAddScalar:
        accumulate(pa, gi);
        break;
      case OpKind::kSquare:
        accumulate(pa, 2.0 * (gi * a));
        break;
      case OpKind::kSqrt:
        accumulate(pa, (0.5 * gi) / y);
        break;
      case OpKind::kExp:
        accumulate(pa, gi * y);
        break;
      case OpKind::kLog:
        accumulate(pa, gi / a);
        break;
      case OpKind::kTanh:
        accumulate(pa, gi - gi * square(y));
        break;
      case OpKind::kSigmoid:
        accumulate(pa, gi * (y - square(y)));
        break;
      case OpKind::kSoftplus:
        accumulate(pa, gi * sigmoid(a));
        break;
      case OpKind::kCos:
        accumulate(pa, -(gi * sin(a)));
        break;
      case OpKind::kSin:
        accumulate(pa, gi * cos(a));
        break;
      case OpKind::kAbs:
        accumulate(pa, gi * constant(map(a.value(), sign_scalar)));
        break;
      case OpKind::kLgamma:
        accumulate(pa, gi * digamma(a));
        break;
      case OpKind::kDigamma:
        accumulate(pa, gi * trigamma(a));
        break;
      case OpKind::kTrigamma:
        throw DomainError("trigamma is not differentiable");
      case OpKind::kMatMul:
        if (reach[pa]) accumulate(pa, matmul(gi, transpose(b)));
        if (reach[pb]) accumulate(pb, matmul(transpose(a), gi));
        break;
      case OpKind::kTranspose:
        accumulate(pa, transpose(gi));
        break;
      case OpKind::kSum:
        accumulate(pa, broadcast_to(gi, a.rows(), a.cols()));
        break;
      case OpKind::kSumTo:
        accumulate(pa, broadcast_to(gi, a.rows(), a.cols()));
        break;
      case OpKind::kBroadcastTo:
        accumulate(pa, sum_to(gi, a.rows(), a.cols()));
        break;
      case OpKind::kGatherRows:
        accumulate(pa, scatter_add_rows(gi, n.index, a.rows()));
        break;
      case OpKind::kScatterAddRows:
        accumulate(pa, gather_rows(gi, n.index));
        break;
      case OpKind::kConcatCols:
        if (reach[pa]) accumulate(pa, slice_cols(gi, 0, a.cols()));
        if (reach[pb]) accumulate(pb, slice_cols(gi, a.cols(), b.cols()));
        break;
      case OpKind::kSliceCols:
        accumulate(pa, pad_cols(gi, n.aux0, a.cols()));
        break;
      case OpKind::kPadCols:
        accumulate(pa, slice_cols(gi, n.aux0, a.cols()));
        break;
      case OpKind::kVariable:
      case OpKind::kConstant:
        break;
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (Var w : wrt) {
    if (w.id() <= last && has[w.id()]) {
      result.push_back(g[w.id()]);
    } else {
      result.push_back(constant(Matrix::Zero(w.rows(), w.cols())));
    }
  }
  return result;
}

// ---- ops ------------------------------------------------------------------

Var operator+(Var a, Var b) {
  Tape* t = common_tape(a, b);
  return t->push(OpKind::kAdd,
                 broadcast_apply(a.value(), b.value(), OpKind::kAdd,
                                 [](auto x, auto y) { return x + y; }),
                 {a, b});
}

Var operator-(Var a, Var b) {
  Tape* t = common_tape(a, b);
  return t->push(OpKind::kSub,
                 broadcast_apply(a.value(), b.value(), OpKind::kSub,
                                 [](auto x, auto y) { return x - y; }),
                 {a, b});
}

Var operator*(Var a, Var b) {
  Tape* t = common_tape(a, b);
  return t->push(OpKind::kMul,
                 broadcast_apply(a.value(), b.value(), OpKind::kMul,
                                 [](auto x, auto y) { return x * y; }),
                 {a, b});
}

Var operator/(Var a, Var b) {
  Tape* t = common_tape(a, b);
  return t->push(OpKind::kDiv,
                 broadcast_apply(a.value(), b.value(), OpKind::kDiv,
                                 [](auto x, auto y) { return x / y; }),
                 {a, b});
}

Var operator-(Var a) { return a.tape()->push(OpKind::kNeg, -a.value(), {a}); }

Var operator*(double c, Var a) {
  return a.tape()->push(OpKind::kScale, c * a.value(), {a}, c);
}
Var operator*(Var a, double c) { return c * a; }

Var operator+(Var a, double c) {
  return a.tape()->push(OpKind::kAddScalar, (a.value().array() + c).matrix(),
                        {a}, c);
}
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return (-a) + c; }

Var square(Var a) {
  return a.tape()->push(OpKind::kSquare, a.value().array().square().matrix(),
                        {a});
}
Var sqrt(Var a) {
  return a.tape()->push(OpKind::kSqrt, a.value().array().sqrt().matrix(), {a});
}
Var exp(Var a) {
  return a.tape()->push(OpKind::kExp, a.value().array().exp().matrix(), {a});
}
Var log(Var a) {
  return a.tape()->push(OpKind::kLog, a.value().array().log().matrix(), {a});
}
Var tanh(Var a) {
  return a.tape()->push(OpKind::kTanh, a.value().array().tanh().matrix(), {a});
}
Var sigmoid(Var a) {
  return a.tape()->push(OpKind::kSigmoid, map(a.value(), sigmoid_scalar), {a});
}
Var softplus(Var a) {
  return a.tape()->push(OpKind::kSoftplus, map(a.value(), softplus_scalar),
                        {a});
}
Var cos(Var a) {
  return a.tape()->push(OpKind::kCos, a.value().array().cos().matrix(), {a});
}
Var sin(Var a) {
  return a.tape()->push(OpKind::kSin, a.value().array().sin().matrix(), {a});
}
Var abs(Var a) {
  return a.tape()->push(OpKind::kAbs, a.value().cwiseAbs(), {a});
}
Var lgamma(Var a) {
  return a.tape()->push(OpKind::kLgamma, map(a.value(), lgamma_scalar), {a});
}
Var digamma(Var a) {
  return a.tape()->push(OpKind::kDigamma, map(a.value(), digamma_scalar), {a});
}
Var trigamma(Var a) {
  return a.tape()->push(OpKind::kTrigamma, map(a.value(), trigamma_scalar),
                        {a});
}

Var matmul(Var a, Var b) {
  Tape* t = common_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DomainError("matmul shape mismatch: " + shape_str(a.value()) +
                      " * " + shape_str(b.value()));
  }
  return t->push(OpKind::kMatMul, a.value() * b.value(), {a, b});
}

Var transpose(Var a) {
  return a.tape()->push(OpKind::kTranspose, a.value().transpose(), {a});
}

Var sum(Var a) {
  return a.tape()->push(OpKind::kSum, Matrix::Constant(1, 1, a.value().sum()),
                        {a});
}

Var sum_to(Var a, Index rows, Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  return a.tape()->push(OpKind::kSumTo, reduce_to(a.value(), rows, cols), {a},
                        0.0, rows, cols);
}

Var broadcast_to(Var a, Index rows, Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  if ((a.rows() != 1 && a.rows() != rows) ||
      (a.cols() != 1 && a.cols() != cols)) {
    throw DomainError("cannot broadcast " + shape_str(a.value()));
  }
  return a.tape()->push(OpKind::kBroadcastTo, expand(a.value(), rows, cols),
                        {a}, 0.0, rows, cols);
}

Var sum_cols(Var a) { return sum_to(a, a.rows(), 1); }

Var mean(Var a) {
  return (1.0 / static_cast<double>(a.value().size())) * sum(a);
}

Var gather_rows(Var a, std::shared_ptr<const IndexList> index) {
  check_index(*index, a.rows(), "gather_rows");
  Matrix v = gather_values(a.value(), *index);
  return a.tape()->push(OpKind::kGatherRows, std::move(v), {a}, 0.0, 0, 0,
                        std::move(index));
}

Var scatter_add_rows(Var a, std::shared_ptr<const IndexList> index,
                     Index out_rows) {
  if (static_cast<Index>(index->size()) != a.rows()) {
    throw DomainError("scatter_add_rows: index length must equal row count");
  }
  check_index(*index, out_rows, "scatter_add_rows");
  Matrix v = scatter_values(a.value(), *index, out_rows);
  return a.tape()->push(OpKind::kScatterAddRows, std::move(v), {a}, 0.0,
                        out_rows, 0, std::move(index));
}

Var concat_cols(Var a, Var b) {
  Tape* t = common_tape(a, b);
  if (a.rows() != b.rows()) throw DomainError("concat_cols row mismatch");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  return t->push(OpKind::kConcatCols, std::move(v), {a, b});
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_cols of nothing");
  Var out = parts[0];
  for (std::size_t k = 1; k < parts.size(); ++k) out = concat_cols(out, parts[k]);
  return out;
}

Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DomainError("slice_cols out of range");
  }
  if (start == 0 && count == a.cols()) return a;
  return a.tape()->push(OpKind::kSliceCols, a.value().middleCols(start, count),
                        {a}, 0.0, start, count);
}

Var pad_cols(Var a, Index start, Index total) {
  if (start < 0 || start + a.cols() > total) {
    throw DomainError("pad_cols out of range");
  }
  return a.tape()->push(OpKind::kPadCols, pad_values(a.value(), start, total),
                        {a}, 0.0, start, total);
}

std::vector<Matrix> grad_of_grad(Var loss, std::span<const Var> wrt) {
  return loss.tape()->grad(loss, wrt);
}

}  // namespace uqlab::diff

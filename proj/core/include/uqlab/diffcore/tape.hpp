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

#pragma once

// Reverse-mode differentiation over dense matrices.
//
// A Tape records every operation applied to Vars. Gradients come in two
// flavours:
//   * Tape::grad       - plain first-order gradients, nothing is recorded.
//   * Tape::grad_graph - the backward pass itself is recorded on the tape, so
//                        the returned gradients are Vars that can be
//                        differentiated once more.
// Nesting is limited to depth two: a gradient graph (order 1) may be
// differentiated with Tape::grad, but not recorded again.
//
// Elementwise binary ops broadcast along any dimension of size one.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "uqlab/common/error.hpp"

namespace uqlab::diff {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

enum class OpKind : std::uint8_t {
  kVariable,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kTanh,
  kSigmoid,
  kSoftplus,
  kCos,
  kSin,
  kAbs,
  kLgamma,
  kDigamma,
  kTrigamma,
  kMatMul,
  kTranspose,
  kSum,
  kSumTo,
  kBroadcastTo,
  kGatherRows,
  kScatterAddRows,
  kConcatCols,
  kSliceCols,
  kPadCols,
};

const char* op_name(OpKind op);

// Raised when a caller asks for derivatives beyond second order.
class DepthError : public Error {
 public:
  explicit DepthError(const std::string& what)
      : Error(ErrorKind::kDomain, what) {}
};

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  // Derivative order of the node: 0 for primal values, 1 for nodes built
  // from a recorded gradient.
  int order() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

struct Node {
  OpKind op = OpKind::kConstant;
  Matrix value;
  std::array<std::size_t, 2> parents{};
  std::uint8_t n_parents = 0;
  std::uint8_t order = 0;
  bool requires_grad = false;
  double scalar = 0.0;
  Index aux0 = 0;
  Index aux1 = 0;
  std::shared_ptr<const IndexList> index;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. Variables are differentiable inputs; constants are not.
  Var variable(Matrix value);
  Var constant(Matrix value);
  Var variable(double value);
  Var constant(double value);

  // d(output)/d(wrt[k]) for every k, shaped like wrt[k]. Inputs not on any
  // path to `output` receive zeros. `output` must be 1x1 and of order <= 1.
  std::vector<Matrix> grad(Var output, std::span<const Var> wrt) const;

  // Same, but records the backward pass so the results stay differentiable.
  // `output` must be of order 0.
  std::vector<Var> grad_graph(Var output, std::span<const Var> wrt);

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  // Bytes held by node values.
  std::size_t bytes() const { return bytes_; }

  Var handle(std::size_t id) { return Var(this, id); }

  // Internal: used by the op free functions.
  Var push(OpKind op, Matrix value, std::initializer_list<Var> parents,
           double scalar = 0.0, Index aux0 = 0, Index aux1 = 0,
           std::shared_ptr<const IndexList> index = nullptr);

 private:
  std::vector<char> reachable_from(std::size_t output,
                                   std::span<const Var> wrt) const;

  std::deque<Node> nodes_;
  std::size_t bytes_ = 0;
  std::uint8_t order_floor_ = 0;
};

// Elementwise, broadcasting.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);

Var square(Var a);
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var cos(Var a);
Var sin(Var a);
// Derivative taken as sign(a); only meant for loss terms.
Var abs(Var a);
Var lgamma(Var a);
Var digamma(Var a);
// Not differentiable.
Var trigamma(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);

// Sum of all entries (1x1).
Var sum(Var a);
// Reduces broadcast dimensions: rows -> 1 and/or cols -> 1.
Var sum_to(Var a, Index rows, Index cols);
Var broadcast_to(Var a, Index rows, Index cols);
// Row sums (rows x 1).
Var sum_cols(Var a);
Var mean(Var a);

Var gather_rows(Var a, std::shared_ptr<const IndexList> index);
// out.row(index[k]) += a.row(k); out has `out_rows` rows.
Var scatter_add_rows(Var a, std::shared_ptr<const IndexList> index,
                     Index out_rows);

Var concat_cols(Var a, Var b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Index start, Index count);
Var pad_cols(Var a, Index start, Index total);

// grad() on a loss built from recorded gradients: the second level of a
// depth-two nesting.
std::vector<Matrix> grad_of_grad(Var loss, std::span<const Var> wrt);

}  // namespace uqlab::diff

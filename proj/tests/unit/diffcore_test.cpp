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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/finite_difference.hpp"
#include "uqlab/diffcore/tape.hpp"

namespace uqlab::diff {
namespace {

using testing::central_difference;
using testing::relative_error;

Matrix scalar_matrix(double v) { return Matrix::Constant(1, 1, v); }

TEST(Diffcore, SquareGradient) {
  Tape tape;
  Var x = tape.variable(3.0);
  Var f = square(x);
  const std::vector<Var> wrt{x};
  EXPECT_DOUBLE_EQ(tape.grad(f, wrt)[0](0, 0), 6.0);
}

TEST(Diffcore, DisconnectedInputIsZero) {
  Tape tape;
  Var x = tape.variable(2.0);
  Var y = tape.variable(5.0);
  Var f = x + 0.0;
  const std::vector<Var> wrt{y};
  EXPECT_EQ(tape.grad(f, wrt)[0](0, 0), 0.0);
  EXPECT_EQ(tape.grad_graph(f, wrt)[0].scalar(), 0.0);
}

TEST(Diffcore, SinTimesXMatchesFiniteDifference) {
  auto eval = [](const Matrix& xv) {
    Tape t;
    Var x = t.variable(xv);
    return (sin(x) * x).scalar();
  };
  Tape tape;
  Var x = tape.variable(1.0);
  Var f = sin(x) * x;
  const std::vector<Var> wrt{x};
  const double g = tape.grad(f, wrt)[0](0, 0);
  EXPECT_NEAR(g, std::cos(1.0) + std::sin(1.0), 1e-15);
  const Matrix fd = central_difference(eval, scalar_matrix(1.0), 1e-5);
  EXPECT_LT(std::abs(g - fd(0, 0)) / std::abs(fd(0, 0)), 1e-6);
}

TEST(Diffcore, GradOfGradHandExample) {
  // E = theta r^2, L = (dE/dr)^2, dL/dtheta = 2 (2 theta r)(2 r) = 32.
  Tape tape;
  Var theta = tape.variable(1.0);
  Var r = tape.variable(2.0);
  Var energy = theta * square(r);
  const std::vector<Var> positions{r};
  Var force = tape.grad_graph(energy, positions)[0];
  EXPECT_EQ(force.order(), 1);
  Var loss = square(force);
  const std::vector<Var> params{theta};
  EXPECT_DOUBLE_EQ(grad_of_grad(loss, params)[0](0, 0), 32.0);
}

TEST(Diffcore, LossWithoutForcesMatchesPlainGrad) {
  Tape tape;
  Var theta = tape.variable(0.7);
  Var r = tape.variable(1.3);
  Var energy = theta * square(r) + sin(theta);
  const std::vector<Var> positions{r};
  tape.grad_graph(energy, positions);  // recorded but unused
  const std::vector<Var> params{theta};
  const double plain = tape.grad(energy, params)[0](0, 0);
  EXPECT_DOUBLE_EQ(grad_of_grad(energy, params)[0](0, 0), plain);
}

TEST(Diffcore, NestingDepthExceeded) {
  Tape tape;
  Var r = tape.variable(2.0);
  Var energy = square(r) * r;
  const std::vector<Var> wrt{r};
  Var force = tape.grad_graph(energy, wrt)[0];
  Var loss = square(force);
  EXPECT_THROW(tape.grad_graph(loss, wrt), DepthError);
  // Differentiating the order-1 loss once is fine.
  EXPECT_NO_THROW(tape.grad(loss, wrt));
}

TEST(Diffcore, NonFiniteIntermediateNamesOperation) {
  Tape tape;
  Var x = tape.variable(0.0);
  try {
    log(x);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("log"), std::string::npos);
  }
}

TEST(Diffcore, NonFiniteGradientIsReported) {
  Tape tape;
  Var x = tape.variable(0.0);
  Var f = sqrt(x);  // finite value, infinite slope
  const std::vector<Var> wrt{x};
  EXPECT_THROW(tape.grad(f, wrt), NumericError);
}

TEST(Diffcore, BroadcastingAndReductions) {
  Tape tape;
  Matrix a(2, 3);
  a << 1, 2, 3, 4, 5, 6;
  Matrix row(1, 3);
  row << 0.5, -1.0, 2.0;
  Var va = tape.variable(a);
  Var vr = tape.variable(row);
  Var f = sum(square(va * vr));
  const std::vector<Var> wrt{va, vr};
  auto g = tape.grad(f, wrt);
  // df/drow_j = sum_i 2 a_ij^2 row_j
  for (int j = 0; j < 3; ++j) {
    const double want = 2.0 * row(0, j) * (a(0, j) * a(0, j) + a(1, j) * a(1, j));
    EXPECT_NEAR(g[1](0, j), want, 1e-12);
  }
  EXPECT_NEAR(g[0](1, 2), 2.0 * a(1, 2) * row(0, 2) * row(0, 2), 1e-12);
}

TEST(Diffcore, GatherScatterRoundTrip) {
  Tape tape;
  Matrix a(3, 2);
  a << 1, 2, 3, 4, 5, 6;
  Var va = tape.variable(a);
  auto idx = std::make_shared<const IndexList>(IndexList{2, 0, 2});
  Var g = gather_rows(va, idx);
  Var s = scatter_add_rows(g, idx, 3);
  EXPECT_DOUBLE_EQ(s.value()(2, 1), 12.0);
  EXPECT_DOUBLE_EQ(s.value()(1, 0), 0.0);
  const std::vector<Var> wrt{va};
  auto grad = tape.grad(sum(s), wrt);
  EXPECT_DOUBLE_EQ(grad[0](2, 0), 2.0);  // gathered twice
  EXPECT_DOUBLE_EQ(grad[0](0, 0), 1.0);
  EXPECT_DOUBLE_EQ(grad[0](1, 0), 0.0);
}

// A random smooth scalar function of a 4x1 input, built from the op set used
// by the potentials.
struct RandomGraph {
  std::vector<int> ops;
  std::vector<Matrix> weights;
  std::vector<double> coeffs;

  explicit RandomGraph(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 9);
    std::normal_distribution<double> normal(0.0, 0.5);
    const int depth = 3 + static_cast<int>(rng() % 4);
    for (int k = 0; k < depth; ++k) {
      ops.push_back(pick(rng));
      Matrix w(4, 4);
      for (Index i = 0; i < w.size(); ++i) w(i) = normal(rng);
      weights.push_back(w);
      coeffs.push_back(normal(rng));
    }
  }

  Var build(Var x) const {
    Tape& t = *x.tape();
    Var h = x;
    for (std::size_t k = 0; k < ops.size(); ++k) {
      switch (ops[k]) {
        case 0: h = tanh(h); break;
        case 1: h = sin(h) + h; break;
        case 2: h = softplus(h); break;
        case 3: h = matmul(t.constant(weights[k]), h); break;
        case 4: h = h * sigmoid(h); break;
        case 5: h = exp(0.3 * h); break;
        case 6: h = sqrt(square(h) + 1.0); break;
        case 7: h = h * (h + coeffs[k]); break;
        case 8: h = cos(h) * 0.5 + h; break;
        default: h = h / (square(h) + 2.0); break;
      }
    }
    return sum(h * h) + coeffs.front() * sum(h);
  }
};

TEST(Diffcore, RandomGraphsMatchFiniteDifferences) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 0.7);
  double worst_first = 0.0;
  double worst_second = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RandomGraph graph(rng);
    Matrix x0(4, 1);
    for (Index i = 0; i < 4; ++i) x0(i) = normal(rng);

    auto value = [&](const Matrix& xv) {
      Tape t;
      return graph.build(t.variable(xv)).scalar();
    };
    // Second-order quantity: squared norm of the gradient.
    auto grad_norm = [&](const Matrix& xv) {
      Tape t;
      Var x = t.variable(xv);
      const std::vector<Var> wrt{x};
      return t.grad(graph.build(x), wrt)[0].squaredNorm();
    };

    Tape tape;
    Var x = tape.variable(x0);
    Var f = graph.build(x);
    const std::vector<Var> wrt{x};
    const Matrix g = tape.grad(f, wrt)[0];
    worst_first = std::max(
        worst_first, relative_error(g, central_difference(value, x0, 1e-5)));

    Var gx = tape.grad_graph(f, wrt)[0];
    Var loss = sum(square(gx));
    const Matrix gg = grad_of_grad(loss, wrt)[0];
    worst_second = std::max(
        worst_second,
        relative_error(gg, central_difference(grad_norm, x0, 1e-4)));
  }
  EXPECT_LT(worst_first, 1e-5);
  EXPECT_LT(worst_second, 1e-3);
}

TEST(Diffcore, Linearity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    RandomGraph f_graph(rng);
    RandomGraph g_graph(rng);
    Matrix x0 = Matrix::Random(4, 1);
    const double a = 1.7;
    const double b = -0.4;
    Tape tape;
    Var x = tape.variable(x0);
    Var f = f_graph.build(x);
    Var g = g_graph.build(x);
    const std::vector<Var> wrt{x};
    const Matrix gf = tape.grad(f, wrt)[0];
    const Matrix gg = tape.grad(g, wrt)[0];
    const Matrix combined = tape.grad(a * f + b * g, wrt)[0];
    EXPECT_LT((combined - (a * gf + b * gg)).norm(),
              1e-12 * std::max(1.0, combined.norm()));
  }
}

TEST(Diffcore, DeterministicGradients) {
  std::mt19937_64 rng(99);
  RandomGraph graph(rng);
  Matrix x0 = Matrix::Random(4, 1);
  auto run = [&] {
    Tape tape;
    Var x = tape.variable(x0);
    Var f = graph.build(x);
    const std::vector<Var> wrt{x};
    Var gx = tape.grad_graph(f, wrt)[0];
    return grad_of_grad(sum(square(gx)), wrt)[0];
  };
  const Matrix first = run();
  const Matrix second = run();
  for (Index i = 0; i < first.size(); ++i) {
    EXPECT_EQ(std::memcmp(&first(i), &second(i), sizeof(double)), 0);
  }
}

TEST(Diffcore, SpecialFunctionGradients) {
  auto value = [](const Matrix& xv) {
    Tape t;
    Var x = t.variable(xv);
    return sum(lgamma(x) + softplus(x) + abs(x - 10.0)).scalar();
  };
  Matrix x0(3, 1);
  x0 << 1.5, 2.5, 4.0;
  Tape tape;
  Var x = tape.variable(x0);
  Var f = sum(lgamma(x) + softplus(x) + abs(x - 10.0));
  const std::vector<Var> wrt{x};
  EXPECT_LT(relative_error(tape.grad(f, wrt)[0],
                           central_difference(value, x0, 1e-5)),
            1e-8);
}

}  // namespace
}  // namespace uqlab::diff

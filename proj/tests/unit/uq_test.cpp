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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "../support/finite_difference.hpp"
#include "../support/fixtures.hpp"
#include "../support/structures.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/training/training.hpp"
#include "uqlab/uq/uq.hpp"

namespace uqlab {
namespace {

using testing::spring_arch;
using testing::spring_data;

const double kHalfLog2Pi = 0.5 * std::log(2.0 * M_PI);

PotentialOutput forces_only(Eigen::MatrixXd f, double e = 0.0) {
  PotentialOutput o;
  o.energy = e;
  o.forces = std::move(f);
  return o;
}

GmmModel gaussian(std::vector<double> weights, std::vector<double> means, std::vector<double> vars) {
  GmmModel g;
  g.k = static_cast<int>(weights.size());
  g.d = 1;
  g.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), g.k);
  g.means.resize(g.k, 1);
  for (int c = 0; c < g.k; ++c) {
    g.means(c, 0) = means[static_cast<std::size_t>(c)];
    g.covariances.push_back(Eigen::MatrixXd::Constant(1, 1, vars[static_cast<std::size_t>(c)]));
  }
  g.finalize();
  return g;
}

double ranks_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    Eigen::VectorXd r(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) r(static_cast<Eigen::Index>(idx[k])) = static_cast<double>(k);
    return r;
  };
  Eigen::VectorXd ra = ranks(a);
  Eigen::VectorXd rb = ranks(b);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  return ra.dot(rb) / (ra.norm() * rb.norm());
}

TEST(EnsembleUq, IdenticalMembersGiveZero) {
  const Eigen::MatrixXd f = Eigen::MatrixXd::Random(4, 3);
  const EnsembleVariance v = ensemble_uncertainty({forces_only(f, 2.0), forces_only(f, 2.0), forces_only(f, 2.0)});
  EXPECT_NEAR(v.energy, 0.0, 1e-12);
  EXPECT_NEAR(v.forces, 0.0, 1e-12);
}

TEST(EnsembleUq, TwoMemberExamples) {
  Eigen::MatrixXd f1(1, 3), f2(1, 3);
  f1 << 1, 0, 0;
  f2 << 3, 0, 0;
  const EnsembleVariance v = ensemble_uncertainty({forces_only(f1, 1.0), forces_only(f2, 3.0)});
  EXPECT_NEAR(v.energy, 2.0, 1e-12);
  EXPECT_NEAR(v.forces, 2.0 / 3.0, 1e-12);
}

TEST(EnsembleUq, MatchesDoubleLoop) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> members(2, 6), atoms(1, 7);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = members(rng);
    const int n = atoms(rng);
    std::vector<PotentialOutput> outs;
    for (int k = 0; k < m; ++k) {
      Eigen::MatrixXd f(n, 3);
      for (Eigen::Index i = 0; i < f.size(); ++i) f(i) = g(rng);
      outs.push_back(forces_only(f, g(rng)));
    }
    double expected = 0.0;
    for (int k = 0; k < m; ++k) {
      double per_member = 0.0;
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) {
          double mean = 0.0;
          for (int l = 0; l < m; ++l) mean += outs[static_cast<std::size_t>(l)].forces(i, c);
          mean /= m;
          const double dev = outs[static_cast<std::size_t>(k)].forces(i, c) - mean;
          per_member += dev * dev;
        }
      }
      expected += per_member / (3.0 * n);
    }
    expected /= (m - 1);
    EXPECT_NEAR(ensemble_uncertainty(outs).forces, expected, 1e-12 * std::max(1.0, expected));
  }
}

TEST(EnsembleUq, NeedsTwoMembers) {
  EXPECT_THROW(ensemble_uncertainty({forces_only(Eigen::MatrixXd::Zero(1, 3))}), DomainError);
}

TEST(MveUq, MeanOfAtomVariances) {
  PotentialOutput o;
  o.head = HeadType::kMve;
  o.atom_variance = {1.0, 3.0};
  EXPECT_DOUBLE_EQ(mve_uncertainty(o), 2.0);
  o.head = HeadType::kStandard;
  EXPECT_THROW(mve_uncertainty(o), DomainError);
}

TEST(MveUq, HugeNegativeBiasStaysNonNegative) {
  ModelBundle m = make_bundle(spring_arch(HeadType::kMve), 1, 3);
  ParamVector& p = m.members[0];
  const Segment& seg = p.layout.back();
  p.values.segment(seg.offset, seg.size()).setConstant(-800.0);
  const auto data = spring_data(1, 1);
  const double u = mve_uncertainty(predict(data[0].structure, m, 0));
  EXPECT_GE(u, 0.0);
  EXPECT_LT(u, 1e-6);
}

TEST(EvidentialUq, ClosedFormExamples) {
  EvidentialUncertainty a = evidential_uncertainty(1.0, 2.0, 3.0);
  EXPECT_NEAR(a.aleatoric, 3.0, 1e-12);
  EXPECT_NEAR(a.epistemic, 3.0, 1e-12);
  a = evidential_uncertainty(4.0, 1.5, 1.0);
  EXPECT_NEAR(a.aleatoric, 2.0, 1e-12);
  EXPECT_NEAR(a.epistemic, 0.5, 1e-12);
  a = evidential_uncertainty(2.0, 3.0, 1e-300);
  EXPECT_LT(a.aleatoric, 1e-299);
  EXPECT_LT(a.epistemic, 1e-299);
}

TEST(EvidentialUq, AlphaAtMostOneIsDomainError) {
  EXPECT_THROW(evidential_uncertainty(1.0, 1.0, 1.0), DomainError);
  EXPECT_THROW(evidential_uncertainty(1.0, 0.5, 1.0), DomainError);
}

TEST(GmmUq, StandardNormalExamples) {
  const GmmModel g = gaussian({1.0}, {0.0}, {1.0});
  EXPECT_NEAR(gmm_atom_nll(g, Eigen::MatrixXd::Zero(1, 1))(0), kHalfLog2Pi, 1e-12);
  EXPECT_NEAR(gmm_atom_nll(g, Eigen::MatrixXd::Constant(1, 1, 3.0))(0), kHalfLog2Pi + 4.5, 1e-12);
  const GmmModel twin = gaussian({0.5, 0.5}, {0.0, 0.0}, {1.0, 1.0});
  EXPECT_NEAR(gmm_atom_nll(twin, Eigen::MatrixXd::Zero(1, 1))(0), kHalfLog2Pi, 1e-12);
}

TEST(GmmUq, PoolingAndGraphAgree) {
  const GmmModel g = gaussian({0.3, 0.7}, {-1.0, 2.0}, {0.5, 2.0});
  PotentialOutput o;
  o.latent.resize(3, 1);
  o.latent << 0.0, 3.0, -4.0;
  const Eigen::VectorXd nll = gmm_atom_nll(g, o.latent);
  EXPECT_NEAR(gmm_uncertainty(g, o, Pooling::kMean), nll.mean(), 1e-12);
  EXPECT_NEAR(gmm_uncertainty(g, o, Pooling::kMax), nll.maxCoeff(), 1e-12);
  diff::Tape tape;
  const diff::Var graph = gmm_nll_graph(tape.constant(o.latent), g);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(graph.value()(i, 0), nll(i), 1e-12);
}

TEST(GmmUq, AddingComponentAtQueryNeverIncreasesNll) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    const double x = n(rng);
    const GmmModel base = gaussian({1.0}, {n(rng)}, {1.0 + u(rng)});
    const double w = u(rng);
    // The added component's own density at x must exceed the base density.
    const GmmModel grown = gaussian({1.0 - w, w}, {base.means(0, 0), x}, {base.covariances[0](0, 0), 0.1});
    const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(1, 1, x);
    EXPECT_LE(gmm_atom_nll(grown, q)(0), gmm_atom_nll(base, q)(0));
  }
}

TEST(GmmUq, DimensionMismatchIsRejected) {
  UqContext ctx;
  ctx.model = std::make_shared<ModelBundle>(make_bundle(spring_arch(HeadType::kStandard), 1, 1));
  ctx.scheme = Scheme::kGmm;
  ctx.gmm = std::make_shared<GmmModel>(gaussian({1.0}, {0.0}, {1.0}));
  EXPECT_THROW(ctx.validate(), DomainError);
  diff::Tape tape;
  EXPECT_THROW(gmm_nll_graph(tape.constant(diff::Matrix::Zero(2, 3)), *ctx.gmm), DomainError);
}

TEST(UqContext, SchemeMustMatchHead) {
  UqContext ctx;
  ctx.model = std::make_shared<ModelBundle>(make_bundle(spring_arch(HeadType::kMve), 2, 1));
  ctx.scheme = Scheme::kEvidential;
  EXPECT_THROW(ctx.validate(), DomainError);
  ctx.scheme = Scheme::kEnsemble;
  EXPECT_THROW(ctx.validate(), DomainError);
  ctx.scheme = Scheme::kMve;
  EXPECT_NO_THROW(ctx.validate());
}

struct SchemeCase {
  Scheme scheme;
  std::size_t members;
};

UqContext context_for(const SchemeCase& c, const std::vector<LabeledSample>& data) {
  ModelBundle m = make_bundle(spring_arch(head_for_scheme(c.scheme)), c.members, 21);
  m.norm = fit_normalization(data);
  UqContext ctx;
  ctx.scheme = c.scheme;
  if (c.scheme == Scheme::kGmm) {
    std::vector<const Structure*> s;
    for (const LabeledSample& d : data) s.push_back(&d.structure);
    ctx.gmm = std::make_shared<GmmModel>(fit_latent_gmm(m, 0, s, {1, 2}, 4).model);
  }
  ctx.model = std::make_shared<ModelBundle>(std::move(m));
  return ctx;
}

const std::vector<SchemeCase> kCases{{Scheme::kEnsemble, 3},
                                     {Scheme::kMve, 1},
                                     {Scheme::kEvidential, 1},
                                     {Scheme::kGmm, 1}};

TEST(UqGraph, MatchesClosedFormForAllSchemes) {
  const auto data = spring_data(30, 12, 0.2);
  for (const SchemeCase& c : kCases) {
    const UqContext ctx = context_for(c, data);
    std::vector<const Structure*> s{&data[0].structure, &data[1].structure, &data[2].structure};
    const auto records = evaluate_uncertainty(s, ctx);
    const AtomsBatch batch = make_batch(s, ctx.model->arch.descriptor);
    diff::Tape tape;
    const UncertaintyGraph g = uncertainty_graph(tape.constant(batch.positions), batch, ctx);
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double want = records[k].u;
      EXPECT_TRUE(std::isfinite(want));
      EXPECT_NEAR(g.u.value()(static_cast<Eigen::Index>(k), 0), want, 1e-10 * std::max(1.0, std::abs(want)))
          << to_string(c.scheme);
      EXPECT_NEAR(g.energy.value()(static_cast<Eigen::Index>(k), 0), records[k].energy, 1e-9);
      if (c.scheme != Scheme::kGmm) EXPECT_GE(want, 0.0);
    }
  }
}

TEST(UqGraph, PositionGradientsMatchFiniteDifferences) {
  const auto data = spring_data(30, 13, 0.2);
  for (const SchemeCase& c : kCases) {
    const UqContext ctx = context_for(c, data);
    const Structure& s = data[4].structure;
    const AtomsBatch batch = make_batch(s, ctx.model->arch.descriptor);
    diff::Tape tape;
    diff::Var x = tape.variable(batch.positions);
    const UncertaintyGraph g = uncertainty_graph(x, batch, ctx);
    const Eigen::MatrixXd grad = tape.grad(sum(g.u), std::vector<diff::Var>{x})[0];
    auto u_at = [&](const Eigen::MatrixXd& p) {
      Structure moved = s;
      moved.positions = p;
      return evaluate_uncertainty({&moved}, ctx)[0].u;
    };
    const Eigen::MatrixXd fd = testing::central_difference(u_at, s.positions, 1e-5);
    EXPECT_LT(testing::relative_error(grad, fd), 1e-4) << to_string(c.scheme);
  }
}

TEST(UqGraph, MaxPoolingPicksLargestAtom) {
  const auto data = spring_data(30, 14, 0.2);
  UqContext ctx = context_for({Scheme::kGmm, 1}, data);
  ctx.pooling = Pooling::kMax;
  const Structure& s = data[0].structure;
  const PotentialOutput o = predict(s, *ctx.model, 0);
  const double want = gmm_atom_nll(*ctx.gmm, o.latent).maxCoeff();
  EXPECT_NEAR(evaluate_uncertainty({&s}, ctx)[0].u, want, 1e-12);
  const AtomsBatch batch = make_batch(s, ctx.model->arch.descriptor);
  diff::Tape tape;
  EXPECT_NEAR(uncertainty_graph(tape.constant(batch.positions), batch, ctx).u.scalar(), want, 1e-10);
}

TEST(EnsembleUq, RotationInvariant) {
  const auto data = spring_data(5, 15, 0.2);
  const UqContext ctx = context_for({Scheme::kEnsemble, 4}, data);
  std::mt19937_64 rng(3);
  for (const LabeledSample& d : data) {
    const Structure turned = testing::rotated(d.structure, testing::random_rotation(rng));
    const double a = evaluate_uncertainty({&d.structure}, ctx)[0].u;
    const double b = evaluate_uncertainty({&turned}, ctx)[0].u;
    EXPECT_NEAR(a, b, 1e-8);
  }
}

TEST(UqRecords, CsvRoundTrip) {
  std::vector<UncertaintyRecord> recs(3);
  recs[0] = {"a", Scheme::kEnsemble, 0.125, 2.5, 0.0, 0.0, {}};
  recs[1] = {"b", Scheme::kGmm, -3.75, 0.0, 0.0, 0.0, {}};
  recs[2] = {"c", Scheme::kEvidential, 1.0 / 3.0, 0.1, 0.0, 0.0, {}};
  const auto path = std::filesystem::temp_directory_path() / "uqlab_uq_records.csv";
  write_uncertainty_csv(recs, path);
  const auto back = read_uncertainty_csv(path);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(back[k].structure_id, recs[k].structure_id);
    EXPECT_EQ(back[k].scheme, recs[k].scheme);
    EXPECT_EQ(back[k].u, recs[k].u);
    EXPECT_EQ(back[k].aux1, recs[k].aux1);
  }
  std::filesystem::remove(path);
}

// Force labels carry Gaussian noise whose variance grows with the H-H distance.
TEST(MveUq, RecoversHeteroscedasticNoise) {
  auto noise_sd = [](const Structure& s) {
    const double r = (s.positions.row(1) - s.positions.row(0)).norm();
    return 0.1 + 4.0 * std::max(0.0, r - 0.9);
  };
  auto data = spring_data(160, 16, 0.15);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  for (LabeledSample& d : data) {
    const double sd = noise_sd(d.structure);
    for (Eigen::Index i = 0; i < d.forces.size(); ++i) d.forces(i) += sd * n(rng);
  }
  ModelBundle m = make_bundle(spring_arch(HeadType::kMve), 1, 5);
  m.norm = fit_normalization(data);
  TrainHyper hp;
  hp.epochs = 600;
  hp.patience = 0;
  hp.decay_every = 300;
  LossSpec spec;
  spec.kind = LossKind::kMveNll;
  const TrainReport r = train(m, 0, data, {}, spec, hp, 7);
  ASSERT_FALSE(r.failed) << r.error;

  const auto probe = spring_data(100, 18, 0.15);
  std::vector<double> predicted, injected;
  for (const LabeledSample& d : probe) {
    predicted.push_back(mve_uncertainty(predict(d.structure, m, 0)));
    injected.push_back(std::pow(noise_sd(d.structure), 2));
  }
  const double rho = ranks_spearman(predicted, injected);
  RecordProperty("spearman", std::to_string(rho));
  EXPECT_GT(rho, 0.7);
}

}  // namespace
}  // namespace uqlab

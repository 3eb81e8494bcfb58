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
#include "../support/structures.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/potential/model.hpp"
#include "uqlab/potential/serialization.hpp"

namespace uqlab {
namespace {

using testing::random_cluster;
using testing::random_rotation;
using testing::rotated;

Architecture small_arch(HeadType head) {
  Architecture a;
  a.descriptor.species = {1, 7};
  a.descriptor.cutoff = 3.5;
  a.descriptor.n_basis = 6;
  a.hidden = {12, 12};
  a.latent_dim = 8;
  a.head = head;
  return a;
}

Structure diatomic(double d) {
  Structure s;
  s.id = "pair";
  s.atomic_numbers = {1, 1};
  s.positions = Eigen::MatrixXd::Zero(2, 3);
  s.positions(1, 0) = d;
  return s;
}

TEST(Descriptor, RotatedDiatomicsHaveIdenticalFeatures) {
  DescriptorConfig cfg;
  cfg.species = {1};
  std::mt19937_64 rng(3);
  const Structure a = diatomic(1.1);
  const Structure b = rotated(a, random_rotation(rng));
  EXPECT_LT((featurize(a, cfg) - featurize(b, cfg)).norm(), 1e-12);
}

TEST(Descriptor, IsolatedAtomHasZeroRadialFeatures) {
  DescriptorConfig cfg;
  cfg.species = {1, 7};
  Structure s;
  s.atomic_numbers = {7};
  s.positions = Eigen::MatrixXd::Zero(1, 3);
  const diff::Matrix f = featurize(s, cfg);
  ASSERT_EQ(f.cols(), cfg.feature_width());
  EXPECT_EQ(f.leftCols(f.cols() - 2).norm(), 0.0);
  EXPECT_EQ(f(0, f.cols() - 1), 1.0);
}

TEST(Descriptor, AngularBlockSeesBondAngle) {
  DescriptorConfig cfg;
  cfg.species = {1};
  Structure bent;
  bent.atomic_numbers = {1, 1, 1};
  bent.positions = Eigen::MatrixXd::Zero(3, 3);
  bent.positions(1, 0) = 1.0;
  Structure straight = bent;
  bent.positions(2, 1) = 1.0;
  straight.positions(2, 0) = -1.0;
  const diff::Matrix a = featurize(bent, cfg);
  const diff::Matrix b = featurize(straight, cfg);
  // Same distances from atom 0, different angle.
  EXPECT_LT((a.row(0).leftCols(cfg.n_basis) - b.row(0).leftCols(cfg.n_basis)).norm(), 1e-12);
  EXPECT_GT((a.row(0) - b.row(0)).norm(), 1e-3);
  // cos = -1 at the straight geometry: the lambda = +1 terms vanish.
  EXPECT_NEAR(b(0, cfg.n_basis), 0.0, 1e-12);
  EXPECT_EQ(a.cols(), cfg.feature_width());
}

TEST(Descriptor, NeighbourBeyondCutoffIsIgnored) {
  DescriptorConfig cfg;
  cfg.species = {1};
  const diff::Matrix f = featurize(diatomic(cfg.cutoff + 0.1), cfg);
  EXPECT_EQ(f.leftCols(cfg.n_basis).norm(), 0.0);
}

TEST(Descriptor, SmoothInDistance) {
  DescriptorConfig cfg;
  cfg.species = {1};
  const double h = 1e-5;
  // Lipschitz bound: Gaussian slope <= sqrt(2/e)/w per channel, cutoff slope
  // <= pi/(2 rc), summed over channels.
  const double w = cfg.basis_width();
  const double bound = cfg.n_basis * (std::sqrt(2.0 / std::exp(1.0)) / w +
                                      M_PI / (2.0 * cfg.cutoff));
  for (double d = 0.6; d < cfg.cutoff + 0.5; d += 0.17) {
    const double diff =
        (featurize(diatomic(d + h), cfg) - featurize(diatomic(d), cfg)).norm();
    EXPECT_LE(diff, bound * h * std::sqrt(2.0)) << d;
  }
}

TEST(Descriptor, PermutationOfIdenticalAtoms) {
  DescriptorConfig cfg;
  cfg.species = {1, 7};
  std::mt19937_64 rng(5);
  const Structure s = random_cluster(rng, {7, 1, 1, 1});
  Structure p = s;
  p.positions.row(1) = s.positions.row(3);
  p.positions.row(3) = s.positions.row(1);
  const diff::Matrix fs = featurize(s, cfg);
  const diff::Matrix fp = featurize(p, cfg);
  EXPECT_LT((fs.row(1) - fp.row(3)).norm(), 1e-12);
  EXPECT_LT((fs.row(0) - fp.row(0)).norm(), 1e-12);
}

TEST(Descriptor, EmptyStructureThrows) {
  DescriptorConfig cfg;
  cfg.species = {1};
  Structure s;
  s.positions.resize(0, 3);
  EXPECT_THROW(featurize(s, cfg), DomainError);
}

TEST(Model, LayoutCoversVector) {
  for (HeadType head : {HeadType::kStandard, HeadType::kMve, HeadType::kEvidential}) {
    const ParamVector p = init_params(small_arch(head), 1);
    EXPECT_NO_THROW(p.validate());
  }
}

TEST(Model, TranslationKeepsEnergyAndForces) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 1, 7);
  std::mt19937_64 rng(1);
  const Structure s = random_cluster(rng, {7, 1, 1, 1});
  Structure t = s;
  t.positions.rowwise() += Eigen::RowVector3d(0.3, -1.2, 4.0);
  const PotentialOutput a = predict(s, m, 0);
  const PotentialOutput b = predict(t, m, 0);
  EXPECT_NEAR(a.energy, b.energy, 1e-10);
  EXPECT_LT((a.forces - b.forces).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Model, NetForceVanishes) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 1, 8);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 10; ++k) {
    const Structure s = random_cluster(rng, {7, 1, 1, 1, 1, 7});
    const PotentialOutput out = predict(s, m, 0);
    EXPECT_LT(out.forces.colwise().sum().norm(), 1e-8);
  }
}

TEST(Model, ForcesMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (HeadType head : {HeadType::kStandard, HeadType::kMve, HeadType::kEvidential}) {
    const ModelBundle m = make_bundle(small_arch(head), 1, 21);
    for (int k = 0; k < 20; ++k) {
      const Structure s = random_cluster(rng, {7, 1, 1, 1});
      const PotentialOutput out = predict(s, m, 0);
      auto energy = [&](const Eigen::MatrixXd& x) {
        Structure p = s;
        p.positions = x;
        return predict(p, m, 0).energy;
      };
      const Eigen::MatrixXd fd = -testing::central_difference(energy, s.positions, 1e-5);
      EXPECT_LT(testing::relative_error(out.forces, fd), 1e-4);
    }
  }
}

TEST(Model, RotationInvarianceAndForceCovariance) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 1, 4);
  std::mt19937_64 rng(9);
  const Structure s = random_cluster(rng, {7, 1, 1, 1});
  const PotentialOutput base = predict(s, m, 0);
  for (int k = 0; k < 50; ++k) {
    const Eigen::Matrix3d rot = random_rotation(rng);
    const PotentialOutput out = predict(rotated(s, rot), m, 0);
    EXPECT_LT(std::abs(out.energy - base.energy), 1e-8);
    EXPECT_LT((out.forces - base.forces * rot.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Model, EvidentialConstraintsHoldForExtremeInputs) {
  Architecture arch = small_arch(HeadType::kEvidential);
  ModelBundle m = make_bundle(arch, 1, 3);
  std::mt19937_64 rng(6);
  const Structure s = random_cluster(rng, {7, 1, 1, 1});
  for (double bias : {-1e3, -50.0, 0.0, 50.0}) {
    ParamVector& p = m.members[0];
    const Segment& seg = p.segment("evidential.bias");
    p.values.segment(seg.offset, seg.size()).setConstant(bias);
    const PotentialOutput out = predict(s, m, 0);
    ASSERT_TRUE(out.evidential.has_value());
    EXPECT_GT(out.evidential->nu, 0.0) << bias;
    EXPECT_GT(out.evidential->alpha, 1.0) << bias;
    EXPECT_GT(out.evidential->beta, 0.0) << bias;
  }
}

TEST(Model, MveVarianceNonNegative) {
  ModelBundle m = make_bundle(small_arch(HeadType::kMve), 1, 3);
  ParamVector& p = m.members[0];
  const Segment& seg = p.segment("variance.bias");
  p.values.segment(seg.offset, seg.size()).setConstant(-800.0);
  std::mt19937_64 rng(6);
  const PotentialOutput out = predict(random_cluster(rng, {7, 1, 1, 1}), m, 0);
  for (double v : out.atom_variance) EXPECT_GE(v, 0.0);
}

TEST(Model, LatentWidthMatchesConfiguration) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 3, 4);
  std::mt19937_64 rng(2);
  for (int n : {1, 3, 6}) {
    std::vector<int> z(static_cast<std::size_t>(n), 1);
    const Structure s = random_cluster(rng, z);
    for (std::size_t k = 0; k < m.size(); ++k) {
      const PotentialOutput out = predict(s, m, k);
      EXPECT_EQ(out.latent.cols(), m.arch.latent_dim);
      EXPECT_EQ(out.latent.rows(), n);
    }
  }
}

TEST(Model, BatchMatchesSinglePredictions) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kEvidential), 1, 4);
  std::mt19937_64 rng(2);
  const Structure a = random_cluster(rng, {7, 1, 1, 1});
  const Structure b = random_cluster(rng, {1, 1});
  const auto batch = predict_batch({&a, &b}, m, 0);
  const PotentialOutput sa = predict(a, m, 0);
  const PotentialOutput sb = predict(b, m, 0);
  EXPECT_NEAR(batch[0].energy, sa.energy, 1e-10);
  EXPECT_NEAR(batch[1].energy, sb.energy, 1e-10);
  EXPECT_LT((batch[1].forces - sb.forces).norm(), 1e-10);
  EXPECT_NEAR(batch[0].evidential->beta, sa.evidential->beta, 1e-12);
}

TEST(Model, EnsembleMembersDiffer) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 2, 4);
  EXPECT_GT((m.members[0].values - m.members[1].values).norm(), 0.0);
}

TEST(Model, UnknownSpeciesThrows) {
  const ModelBundle m = make_bundle(small_arch(HeadType::kStandard), 1, 4);
  Structure s = diatomic(1.0);
  s.atomic_numbers = {1, 8};
  EXPECT_THROW(predict(s, m, 0), Error);
}

TEST(Serialization, ModelRoundTripIsExact) {
  ModelBundle m = make_bundle(small_arch(HeadType::kMve), 2, 4);
  m.norm.energy_shift = -1.25;
  m.norm.energy_scale = 3.5;
  m.config_hash = "abc";
  const ModelBundle back = model_from_json(nlohmann::json::parse(model_to_json(m).dump()));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.members[1].values, m.members[1].values);
  EXPECT_EQ(back.norm.energy_scale, 3.5);
  EXPECT_EQ(back.arch.head, HeadType::kMve);
  EXPECT_EQ(back.config_hash, "abc");
}

TEST(Serialization, RejectsWrongVersion) {
  nlohmann::json j = model_to_json(make_bundle(small_arch(HeadType::kStandard), 1, 4));
  j["format_version"] = 99;
  EXPECT_THROW(model_from_json(j), IoError);
}

TEST(Serialization, StructureRoundTrip) {
  std::mt19937_64 rng(2);
  Structure s = random_cluster(rng, {7, 1, 1});
  s.cell = Eigen::Matrix3d::Identity() * 5.0;
  const Structure back = structure_from_json(nlohmann::json::parse(structure_to_json(s).dump()));
  EXPECT_EQ(back.positions, s.positions);
  EXPECT_EQ(*back.cell, *s.cell);
}

}  // namespace
}  // namespace uqlab

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
#include <set>

#include "../support/finite_difference.hpp"
#include "../support/structures.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/oracle/oracle.hpp"

namespace uqlab {
namespace {

OracleSpec inversion_spec() { return OracleSpec{}; }

OracleSpec cluster_spec() {
  OracleSpec spec;
  spec.kind = OracleKind::kPairCluster;
  return spec;
}

Structure jitter(const Structure& s, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  Structure out = s;
  for (Eigen::Index i = 0; i < out.positions.size(); ++i) out.positions(i) += n(rng);
  return out;
}

TEST(InversionOracle, MinimumIsZeroWithNoForce) {
  const InversionOracle oracle(inversion_spec());
  const ForceEval e = oracle.evaluate(oracle.minimum());
  EXPECT_NEAR(e.energy, 0.0, 1e-12);
  EXPECT_LT(e.forces.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(InversionOracle, PlanarTransitionSitsAtBarrier) {
  const InversionOracle oracle(inversion_spec());
  const ForceEval e = oracle.evaluate(oracle.planar_transition());
  EXPECT_NEAR(e.energy, 20.0, 1e-10);
  EXPECT_LT(e.forces.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(InversionOracle, ForcesMatchFiniteDifferences) {
  const InversionOracle oracle(inversion_spec());
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const Structure s = jitter(oracle.minimum(), rng, 0.15);
    const ForceEval e = oracle.evaluate(s);
    auto energy = [&](const Eigen::MatrixXd& x) {
      Structure p = s;
      p.positions = x;
      return oracle.evaluate(p).energy;
    };
    const Eigen::MatrixXd fd = -testing::central_difference(energy, s.positions, 1e-5);
    EXPECT_LT(testing::relative_error(e.forces, fd), 1e-8);
  }
}

TEST(InversionOracle, RigidMotionInvarianceAndZeroNetForce) {
  const InversionOracle oracle(inversion_spec());
  Rng rng(2);
  const Structure s = jitter(oracle.minimum(), rng, 0.1);
  const ForceEval base = oracle.evaluate(s);
  EXPECT_LT(base.forces.colwise().sum().norm(), 1e-10);
  for (int k = 0; k < 50; ++k) {
    Structure t = testing::rotated(s, testing::random_rotation(rng));
    t.positions.rowwise() += Eigen::RowVector3d(0.7 * k, -0.1, 2.0);
    EXPECT_NEAR(oracle.evaluate(t).energy, base.energy, 1e-10);
  }
}

TEST(InversionOracle, MirrorImageHasEqualEnergy) {
  const InversionOracle oracle(inversion_spec());
  Rng rng(3);
  for (int k = 0; k < 20; ++k) {
    const Structure s = jitter(oracle.minimum(), rng, 0.1);
    Structure m = s;
    m.positions.col(2) *= -1.0;
    EXPECT_EQ(oracle.evaluate(m).energy, oracle.evaluate(s).energy);
  }
}

TEST(InversionOracle, RejectsUnknownSpecies) {
  const InversionOracle oracle(inversion_spec());
  Structure s = oracle.minimum();
  s.atomic_numbers[0] = 8;
  EXPECT_THROW(oracle.evaluate(s), DomainError);
}

TEST(PairCluster, ForcesAndInvariance) {
  const PairClusterOracle oracle(cluster_spec());
  EXPECT_GT(oracle.reference_energy(), 0.0);
  EXPECT_NEAR(oracle.evaluate(oracle.minimum()).energy, 0.0, 1e-9);
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const Structure s = jitter(oracle.minimum(), rng, 0.1);
    const ForceEval e = oracle.evaluate(s);
    EXPECT_GE(e.energy, -1e-9);
    EXPECT_LT(e.forces.colwise().sum().norm(), 1e-10);
    auto energy = [&](const Eigen::MatrixXd& x) {
      Structure p = s;
      p.positions = x;
      return oracle.evaluate(p).energy;
    };
    const Eigen::MatrixXd fd = -testing::central_difference(energy, s.positions, 1e-5);
    EXPECT_LT(testing::relative_error(e.forces, fd), 1e-8);
    const Structure r = testing::rotated(s, testing::random_rotation(rng));
    EXPECT_NEAR(oracle.evaluate(r).energy, e.energy, 1e-10);
  }
}

TEST(InitialDataset, StaysBelowCapInOneWell) {
  const InversionOracle oracle(inversion_spec());
  const auto data = generate_initial_dataset(oracle, 78, 200.0, 7);
  ASSERT_EQ(data.size(), 78u);
  for (const LabeledSample& s : data) {
    EXPECT_LT(s.energy, 20.0 / 5.0);
    EXPECT_GT(oracle.height(s.structure), 0.0);
    EXPECT_EQ(s.provenance, "initial");
  }
}

TEST(InitialDataset, SingleSampleAndSeedsDisjoint) {
  const InversionOracle oracle(inversion_spec());
  const auto one = generate_initial_dataset(oracle, 1, 200.0, 1);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_LT(one[0].energy, 4.0);
  const auto a = generate_initial_dataset(oracle, 20, 200.0, 1);
  const auto b = generate_initial_dataset(oracle, 20, 200.0, 2);
  for (const auto& x : a) {
    for (const auto& y : b) EXPECT_NE(x.structure.positions, y.structure.positions);
  }
}

TEST(InitialDataset, UnreachableCapThrows) {
  const InversionOracle oracle(inversion_spec());
  EXPECT_THROW(generate_initial_dataset(oracle, 10, 5000.0, 1, 1e-6), DomainError);
}

TEST(TestLadder, BinsAreRespected) {
  const InversionOracle oracle(inversion_spec());
  LadderOptions opts;
  opts.bins = 24;
  opts.per_bin = 2;
  std::size_t shortfall = 99;
  const auto ladder = generate_test_ladder(oracle, opts, 3, &shortfall);
  EXPECT_EQ(ladder.size() + shortfall, 48u);
  EXPECT_EQ(shortfall, 0u);
  const double width = 24.0 / 24.0;
  std::map<int, int> counts;
  std::set<std::string> ids;
  for (const LabeledSample& s : ladder) {
    const double e = oracle.evaluate(s.structure).energy;
    EXPECT_EQ(e, s.energy);
    const int bin = static_cast<int>(e / width);
    ++counts[bin];
    EXPECT_TRUE(ids.insert(s.structure.id).second);
  }
  for (const auto& [bin, n] : counts) EXPECT_EQ(n, 2) << bin;
}

TEST(TestLadder, HundredBinsAndEmpty) {
  const InversionOracle oracle(inversion_spec());
  LadderOptions opts;
  EXPECT_LE(generate_test_ladder(oracle, opts, 1).size(), 200u);
  opts.per_bin = 0;
  EXPECT_TRUE(generate_test_ladder(oracle, opts, 1).empty());
}

TEST(Samples, JsonLinesRoundTrip) {
  const InversionOracle oracle(inversion_spec());
  const auto data = generate_initial_dataset(oracle, 3, 200.0, 7);
  const auto path = std::filesystem::temp_directory_path() / "uqlab_samples_test.jsonl";
  write_samples(data, path);
  const auto back = read_samples(path);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].forces, data[2].forces);
  EXPECT_EQ(back[2].energy, data[2].energy);
  EXPECT_EQ(back[2].structure.id, data[2].structure.id);
  std::filesystem::remove(path);
}

TEST(OracleSpec, JsonRoundTrip) {
  OracleSpec spec = cluster_spec();
  spec.cluster.atoms = 12;
  spec.masses[18] = 40.0;
  const OracleSpec back = oracle_from_json(oracle_to_json(spec));
  EXPECT_EQ(back.kind, OracleKind::kPairCluster);
  EXPECT_EQ(back.cluster.atoms, 12);
  EXPECT_EQ(back.masses.at(18), 40.0);
  nlohmann::json bad = oracle_to_json(spec);
  bad["inversion"]["barrier"] = -1.0;
  bad["kind"] = "inversion_molecule";
  EXPECT_THROW(oracle_from_json(bad), ConfigError);
}

}  // namespace
}  // namespace uqlab

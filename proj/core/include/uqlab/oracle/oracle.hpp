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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/md/md.hpp"

namespace uqlab {

enum class OracleKind { kInversionMolecule, kPairCluster };

struct InversionParams {
  int central_species = 7;
  int satellite_species = 1;
  double barrier = 20.0;            // B, kcal/mol
  double bond_length = 1.0;         // central-satellite distance at a minimum
  double well_offset = 0.38;        // h0, out-of-plane height at a minimum
  double stiffness = 300.0;         // kcal/mol/Angstrom^2
};

struct PairClusterParams {
  int species = 18;
  int atoms = 8;
  double depth = 1.0;               // Morse well depth, kcal/mol
  double width = 1.6;               // Morse exponent, 1/Angstrom
  double equilibrium = 2.0;         // Angstrom
  double cutoff = 5.0;              // Angstrom
};

struct OracleSpec {
  OracleKind kind = OracleKind::kInversionMolecule;
  InversionParams inversion;
  PairClusterParams cluster;
  std::map<int, double> masses;     // overrides of the standard table

  void validate() const;
};

std::string_view to_string(OracleKind kind);
OracleKind oracle_kind_from_string(std::string_view name);
nlohmann::json oracle_to_json(const OracleSpec& spec);
OracleSpec oracle_from_json(const nlohmann::json& j);

// Analytic ground truth with hand-coded forces. E = 0 at the global minimum.
class Oracle : public ForceField {
 public:
  virtual const OracleSpec& spec() const = 0;
  virtual std::vector<int> species() const = 0;
  // A global-minimum geometry.
  virtual Structure minimum() const = 0;
  // Energy scale used for default caps: the barrier height for the molecule,
  // the binding energy of the minimum for the cluster.
  virtual double reference_energy() const = 0;
  double mass(int atomic_number) const override;

  // Throws DomainError when the species do not match the registry.
  void check_species(const Structure& s) const;
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec);

// Central atom plus three satellites. With u the central atom's offset from
// the satellite centroid and h its component along the satellite-plane
// normal: E = sum_pairs k/2 (d - d0)^2 + k/2 |u - h n|^2 + a (h^2 - h0^2)^2.
class InversionOracle : public Oracle {
 public:
  explicit InversionOracle(OracleSpec spec);
  ForceEval evaluate(const Structure& s) const override;
  const OracleSpec& spec() const override { return spec_; }
  std::vector<int> species() const override;
  Structure minimum() const override;
  double reference_energy() const override { return spec_.inversion.barrier; }

  Structure planar_transition() const;
  // Signed out-of-plane height of the central atom.
  double height(const Structure& s) const;

 private:
  OracleSpec spec_;
  double quartic_ = 0.0;
  double satellite_distance_ = 0.0;
};

// Smoothed Morse pair potential, shifted so the best minimum found by a
// seeded multi-start search sits at zero.
class PairClusterOracle : public Oracle {
 public:
  explicit PairClusterOracle(OracleSpec spec);
  ForceEval evaluate(const Structure& s) const override;
  const OracleSpec& spec() const override { return spec_; }
  std::vector<int> species() const override { return {spec_.cluster.species}; }
  Structure minimum() const override { return minimum_; }
  double reference_energy() const override { return binding_; }

  ForceEval raw(const Structure& s) const;

 private:
  OracleSpec spec_;
  Structure minimum_;
  double offset_ = 0.0;
  double binding_ = 0.0;
};

// Local minimization by FIRE on any force field; returns the relaxed copy.
Structure relax(const Structure& s, const ForceField& ff, int max_steps = 5000,
                double force_tolerance = 1e-8);

std::vector<LabeledSample> generate_initial_dataset(const Oracle& oracle,
                                                    std::size_t n,
                                                    double temperature,
                                                    std::uint64_t seed,
                                                    std::optional<double> cap = {});

struct LadderOptions {
  std::size_t bins = 100;
  std::size_t per_bin = 2;
  std::optional<double> ceiling;    // default 1.2 * reference energy
  std::size_t budget = 400000;      // candidate evaluations
};

// Samples stratified uniformly by oracle energy. Bins that cannot be filled
// within the budget are left short; `shortfall` reports how many are missing.
std::vector<LabeledSample> generate_test_ladder(const Oracle& oracle,
                                                const LadderOptions& opts,
                                                std::uint64_t seed,
                                                std::size_t* shortfall = nullptr);

LabeledSample label(const Oracle& oracle, const Structure& s, std::string provenance);

nlohmann::json sample_to_json(const LabeledSample& s);
LabeledSample sample_from_json(const nlohmann::json& j);
void write_samples(const std::vector<LabeledSample>& samples,
                   const std::filesystem::path& path);
std::vector<LabeledSample> read_samples(const std::filesystem::path& path);

}  // namespace uqlab

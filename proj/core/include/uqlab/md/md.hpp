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
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/common/random.hpp"
#include "uqlab/potential/model.hpp"

namespace uqlab {

struct ForceEval {
  double energy = 0.0;     // kcal/mol
  Eigen::MatrixXd forces;  // n x 3, kcal/mol/Angstrom
};

// Anything that maps a structure to an energy and forces. Implementations
// must be safe to call concurrently.
class ForceField {
 public:
  virtual ~ForceField() = default;
  virtual ForceEval evaluate(const Structure& s) const = 0;
  virtual double mass(int atomic_number) const {
    return standard_atomic_mass(atomic_number);
  }
};

class FunctionForceField : public ForceField {
 public:
  explicit FunctionForceField(std::function<ForceEval(const Structure&)> fn)
      : fn_(std::move(fn)) {}
  ForceEval evaluate(const Structure& s) const override { return fn_(s); }

 private:
  std::function<ForceEval(const Structure&)> fn_;
};

// One member of a trained bundle.
class ModelForceField : public ForceField {
 public:
  ModelForceField(std::shared_ptr<const ModelBundle> model, std::size_t member);
  ForceEval evaluate(const Structure& s) const override;

 private:
  std::shared_ptr<const ModelBundle> model_;
  std::size_t member_;
};

// Member-averaged energy and forces of an ensemble.
class EnsembleForceField : public ForceField {
 public:
  explicit EnsembleForceField(std::shared_ptr<const ModelBundle> model);
  ForceEval evaluate(const Structure& s) const override;

 private:
  std::shared_ptr<const ModelBundle> model_;
};

// Thresholds of the stability check; absent fields are not checked.
struct StabilityRules {
  std::optional<double> min_distance;    // any pair closer -> collision
  std::optional<double> max_distance;    // nearest neighbour farther -> dissociation
  std::optional<double> energy_floor;    // predicted energy below -> unstable
  std::optional<double> max_kinetic;     // kcal/mol
  bool fail_on_zero_kinetic = false;

  static StabilityRules preset(std::string_view name);
};

nlohmann::json rules_to_json(const StabilityRules& r);
StabilityRules rules_from_json(const nlohmann::json& j);

enum class Ensemble { kNve, kNvt };

struct MDConfig {
  Ensemble ensemble = Ensemble::kNvt;
  double temperature = 300.0;  // K
  double dt = 0.5;             // fs
  int steps = 10000;
  double thermostat_q = 0.0;   // 0 = N_dof k_B T (20 dt)^2
  int frame_stride = 100;
  StabilityRules rules = StabilityRules::preset("ammonia");

  void validate() const;
  double resolved_q(std::size_t n_atoms) const;
};

struct Frame {
  int step = 0;
  Eigen::MatrixXd positions;
  Eigen::MatrixXd velocities;
  double energy = 0.0;
  double kinetic = 0.0;
};

struct Trajectory {
  std::string structure_id;
  std::vector<int> atomic_numbers;
  std::vector<Frame> frames;
  int steps = 0;
  int stable_steps = 0;
  std::string failure;  // empty when stable to the end
  double mean_kinetic_temperature = 0.0;
};

// Velocities (Angstrom/fs) drawn at `temperature` with zero net momentum.
Eigen::MatrixXd maxwell_boltzmann(const Structure& s, const ForceField& ff,
                                  double temperature, Rng& rng);

double kinetic_energy(const Eigen::MatrixXd& velocities,
                      const Eigen::VectorXd& masses);

// Returns the violated rule tag or an empty string.
std::string check_stability(const Structure& s, double energy, double kinetic,
                            const StabilityRules& rules);

Trajectory run_md(const Structure& init,
                  std::optional<Eigen::MatrixXd> velocities,
                  const ForceField& ff, const MDConfig& cfg,
                  std::uint64_t seed);

// Trajectory k starts from inits[k % size] with seed derived from (seed, k).
std::vector<Trajectory> run_md_batch(const std::vector<Structure>& inits,
                                     std::size_t count, const ForceField& ff,
                                     const MDConfig& cfg, std::uint64_t seed,
                                     std::size_t threads);

struct StabilitySummary {
  double fraction = 0.0;
  double mean_stable_time = 0.0;  // fs
  std::size_t count = 0;
  std::vector<std::pair<std::string, std::size_t>> failures;
};

StabilitySummary stability_fraction(const std::vector<Trajectory>& trajs,
                                    double dt);
nlohmann::json summary_to_json(const StabilitySummary& s);

void write_extxyz(const Trajectory& traj, const std::filesystem::path& path);

}  // namespace uqlab

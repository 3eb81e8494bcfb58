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

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/uq/uq.hpp"

namespace uqlab {

struct AdversarialConfig {
  double temperature = 300.0;     // K
  double learning_rate = 0.01;    // step length, Angstrom
  int steps = 60;
  std::size_t seeds = 60;         // ascents started per generation
  std::size_t samples = 20;       // structures selected per generation
  double init_scale = 0.01;       // Angstrom
  double dedup_threshold = 0.05;  // Angstrom

  void validate() const;
};

nlohmann::json adversarial_to_json(const AdversarialConfig& c);
AdversarialConfig adversarial_from_json(const nlohmann::json& j);

// log of exp(-E / kT) / sum_i exp(-E_i / kT), evaluated with log-sum-exp.
double log_boltzmann_prob(double energy, std::span<const double> train_energies,
                          double temperature);
double boltzmann_prob(double energy, std::span<const double> train_energies, double temperature);

struct AdversarialResult {
  std::string seed_id;
  Structure structure;          // final perturbed structure
  std::vector<double> trace;    // ascended objective, steps + 1 entries
  std::vector<double> pu_trace; // p * U, steps + 1 entries
  double p = 0.0;
  double u = 0.0;
  double energy = 0.0;
  double objective = 0.0;
  bool stalled = false;         // every gradient was exactly zero
};

// log p and U of one structure as graph nodes (1 x 1 each).
struct ObjectiveTerms {
  diff::Var log_p;
  diff::Var u;
  double energy = 0.0;
};

// Builds the terms for a structure whose positions are bound to `positions`.
using ObjectiveBuilder =
    std::function<ObjectiveTerms(diff::Var positions, const Structure& current)>;

// Objective and its position gradient; positive-U schemes use log p + log U,
// the others log p + U.
struct ObjectiveValue {
  double objective = 0.0;
  double log_p = 0.0;
  double u = 0.0;
  double energy = 0.0;
  Eigen::MatrixXd gradient;  // n x 3
};

ObjectiveValue evaluate_objective(const Structure& s, const ObjectiveBuilder& builder, bool log_u);

// Terms for a trained model under a UQ context.
ObjectiveBuilder model_objective(const UqContext& ctx, std::vector<double> train_energies,
                                 double temperature);

// Whether the scheme's U is positive (ascent on log U).
bool uses_log_u(Scheme scheme);

AdversarialResult adversarial_ascend(const Structure& seed, const ObjectiveBuilder& builder,
                                     bool log_u, const AdversarialConfig& cfg,
                                     std::uint64_t rng_seed);

AdversarialResult adversarial_ascend(const Structure& seed, const UqContext& ctx,
                                     std::span<const double> train_energies,
                                     const AdversarialConfig& cfg, std::uint64_t rng_seed);

// One ascent per seed structure; ascent k uses derive_seed(rng_seed, {k}).
std::vector<AdversarialResult> adversarial_batch(const std::vector<const Structure*>& seeds,
                                                 const UqContext& ctx,
                                                 std::span<const double> train_energies,
                                                 const AdversarialConfig& cfg,
                                                 std::uint64_t rng_seed, std::size_t threads);

// Top-k by final objective after greedy RMSD deduplication; returns indices
// into `results`.
std::vector<std::size_t> select_batch(const std::vector<AdversarialResult>& results, std::size_t k,
                                      double dedup_threshold);

nlohmann::json result_to_json(const AdversarialResult& r);
AdversarialResult result_from_json(const nlohmann::json& j);
void write_results(const std::vector<AdversarialResult>& results, const std::filesystem::path& path);
std::vector<AdversarialResult> read_results(const std::filesystem::path& path);

}  // namespace uqlab

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
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/adversarial/adversarial.hpp"
#include "uqlab/md/md.hpp"
#include "uqlab/metrics/metrics.hpp"
#include "uqlab/oracle/oracle.hpp"
#include "uqlab/training/training.hpp"
#include "uqlab/uq/uq.hpp"

namespace uqlab {

inline constexpr int kConfigSchemaVersion = 1;

// UQ schemes plus the random-acquisition baseline.
enum class Acquisition { kEnsemble, kMve, kEvidential, kGmm, kRandom };

std::string_view to_string(Acquisition a);
Acquisition acquisition_from_string(std::string_view name);
// The UQ scheme scoring the test set (random uses a standard network and no U).
std::optional<Scheme> scheme_of(Acquisition a);
HeadType head_of(Acquisition a);

struct DataConfig {
  std::size_t initial_samples = 78;
  double sample_temperature = 200.0;  // K
  std::optional<double> energy_cap;   // default reference / 5
  LadderOptions ladder;
  double validation_fraction = 0.1;
};

struct GmmConfig {
  std::vector<int> candidates{1, 2, 3, 4, 5, 6};
  Pooling pooling = Pooling::kMean;
  std::size_t max_points = 50000;
  double regularization = EmOptions{}.regularization;  // relative diagonal load
};

struct MdRunConfig {
  MDConfig md;
  std::size_t trajectories = 20;
  bool write_frames = false;
};

enum class ErrorMode { kStructureRmse, kAtom };

struct MetricsConfig {
  double error_percentile = 20.0;
  ErrorMode error_mode = ErrorMode::kStructureRmse;
};

struct RandomConfig {
  double scale = 0.1;  // Angstrom, per-coordinate Gaussian displacement
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir = "runs/experiment";
  std::size_t threads = 1;
  OracleSpec oracle;
  DataConfig data;
  Architecture model;
  Acquisition scheme = Acquisition::kEnsemble;
  std::size_t ensemble_size = 5;
  GmmConfig gmm;
  LossSpec loss;                       // kind follows the scheme's head
  TrainHyper training;
  AdversarialConfig adversarial;
  RandomConfig random;
  MdRunConfig md;
  MetricsConfig metrics;
  int generations = 3;

  void validate() const;
  // Head-consistent loss for the configured scheme.
  LossSpec resolved_loss() const;
  std::size_t members() const;
};

// Keys are strict: unknown keys and a missing or newer schema_version throw
// ConfigError. Omitted keys keep their defaults.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

// SHA-256 of the canonical JSON without output_dir and threads, which do not
// affect results.
std::string config_hash(const ExperimentConfig& c);

nlohmann::json md_config_to_json(const MDConfig& c);
MDConfig md_config_from_json(const nlohmann::json& j);
nlohmann::json loss_to_json(const LossSpec& s);
LossSpec loss_from_json(const nlohmann::json& j);
nlohmann::json hyper_to_json(const TrainHyper& h);
TrainHyper hyper_from_json(const nlohmann::json& j);

}  // namespace uqlab

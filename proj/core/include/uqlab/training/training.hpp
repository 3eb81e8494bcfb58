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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/potential/model.hpp"

namespace uqlab {

enum class LossKind { kMseEf, kMveNll, kEvidential };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view name);
LossKind loss_for_head(HeadType head);

struct LossSpec {
  LossKind kind = LossKind::kMseEf;
  double energy_weight = 0.1;      // rho_E
  double force_weight = 1.0;       // rho_F
  double evidential_lambda = 0.1;  // evidence regularizer

  void validate() const;
  // Throws ConfigError unless the loss kind matches the head.
  void check_head(HeadType head) const;
};

struct TrainHyper {
  int epochs = 2000;
  double learning_rate = 3e-3;
  int batch_size = 0;              // 0 = full batch
  int decay_every = 500;           // epochs; 0 = constant rate
  double decay_factor = 0.5;
  int patience = 50;               // early-stopping epochs; 0 = off
  double gradient_clip = 1e3;      // max gradient norm
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
};

struct TrainReport {
  std::size_t member = 0;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  int best_epoch = 0;
  double best_loss = 0.0;
  std::string snapshot_id;         // hash of the retained parameters
  double wall_seconds = 0.0;
  std::size_t clamp_events = 0;
  std::size_t peak_tape_bytes = 0;
  bool failed = false;
  std::string error;
};

nlohmann::json report_to_json(const TrainReport& r);

// Per-atom energy shift from the mean energy per atom; scale from the force
// RMS, so normalized force targets have unit variance.
Normalization fit_normalization(const std::vector<LabeledSample>& data);

struct BatchLoss {
  diff::Var loss;
  diff::Var forces;
};

// Loss of one batch as a differentiable function of the parameters.
BatchLoss batch_loss(diff::Tape& tape, const AtomsBatch& batch,
                     const std::vector<const LabeledSample*>& samples,
                     const ModelBundle& model, const ParamVars& params,
                     const LossSpec& spec);

double evaluate_loss(const ModelBundle& model, std::size_t member,
                     const std::vector<LabeledSample>& data, const LossSpec& spec);

// Trains one member in place. When `validation` is empty the training loss
// drives early stopping and snapshot selection.
TrainReport train(ModelBundle& model, std::size_t member,
                  const std::vector<LabeledSample>& training,
                  const std::vector<LabeledSample>& validation,
                  const LossSpec& spec, const TrainHyper& hp, std::uint64_t seed);

// Trains every member with seed derive_seed(seed, {m}), or with `seed` itself
// for every member when `shared_seed` is set. Members fail independently; at
// least two must survive.
std::vector<TrainReport> train_ensemble(ModelBundle& model,
                                        const std::vector<LabeledSample>& training,
                                        const std::vector<LabeledSample>& validation,
                                        const LossSpec& spec, const TrainHyper& hp,
                                        std::uint64_t seed, std::size_t threads,
                                        bool shared_seed = false);

}  // namespace uqlab

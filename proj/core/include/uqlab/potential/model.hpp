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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqlab/diffcore/tape.hpp"
#include "uqlab/potential/descriptor.hpp"

namespace uqlab {

enum class HeadType { kStandard, kMve, kEvidential };
enum class Activation { kTanh, kSilu };

std::string_view to_string(HeadType head);
HeadType head_from_string(std::string_view name);
std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

struct Architecture {
  DescriptorConfig descriptor;
  std::vector<int> hidden{32, 32};
  int latent_dim = 16;
  HeadType head = HeadType::kStandard;
  Activation activation = Activation::kTanh;

  void validate() const;
};

// Named, contiguous slice of a ParamVector holding a rows x cols matrix in
// column-major order.
struct Segment {
  std::string name;
  diff::Index offset = 0;
  diff::Index rows = 0;
  diff::Index cols = 0;

  diff::Index size() const { return rows * cols; }
};

// Flat parameter storage with a layout that covers it exactly.
struct ParamVector {
  Eigen::VectorXd values;
  std::vector<Segment> layout;

  // Throws if values are non-finite or the layout overlaps / leaves gaps.
  void validate() const;
  const Segment& segment(std::string_view name) const;
  diff::Matrix matrix(const Segment& seg) const;
};

std::vector<Segment> parameter_layout(const Architecture& arch);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], seeded.
ParamVector init_params(const Architecture& arch, std::uint64_t seed);

// Energies are predicted as scale * sum_i e_i + shift * n.
struct Normalization {
  double energy_shift = 0.0;  // per atom, kcal/mol
  double energy_scale = 1.0;  // kcal/mol
};

struct ModelBundle {
  Architecture arch;
  Normalization norm;
  std::vector<ParamVector> members;
  std::string config_hash;

  std::size_t size() const { return members.size(); }
  void validate() const;
};

// M members with seeds derived from `seed`.
ModelBundle make_bundle(const Architecture& arch, std::size_t members,
                        std::uint64_t seed);

struct ParamVars {
  std::vector<diff::Var> segments;  // in layout order
};

ParamVars bind_params(diff::Tape& tape, const ParamVector& params,
                      bool trainable);

// Flattens per-segment gradients back into ParamVector order.
Eigen::VectorXd flatten_gradient(const ParamVector& params,
                                 const std::vector<diff::Matrix>& grads);

struct ModelGraph {
  diff::Var energy;         // S x 1
  diff::Var latent;         // N x D
  diff::Var atom_variance;  // N x 1, MVE head
  diff::Var nu;             // S x 1, evidential head
  diff::Var alpha;          // S x 1
  diff::Var beta;           // S x 1, kcal^2/mol^2
  diff::Var beta_unit;      // S x 1, beta / scale^2
};

ModelGraph build_model_graph(diff::Var positions, const AtomsBatch& batch,
                             const Architecture& arch,
                             const Normalization& norm,
                             const ParamVars& params);

struct EvidentialParams {
  double gamma = 0.0;
  double nu = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
};

struct PotentialOutput {
  std::string structure_id;
  HeadType head = HeadType::kStandard;
  double energy = 0.0;
  diff::Matrix forces;                 // n x 3
  diff::Matrix latent;                 // n x D
  std::vector<double> atom_variance;   // MVE only
  std::optional<EvidentialParams> evidential;
};

PotentialOutput predict(const Structure& s, const ModelBundle& model,
                        std::size_t member);
std::vector<PotentialOutput> predict_batch(
    const std::vector<const Structure*>& structures, const ModelBundle& model,
    std::size_t member);

}  // namespace uqlab

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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "uqlab/gmm/gmm.hpp"
#include "uqlab/potential/model.hpp"

namespace uqlab {

enum class Scheme { kEnsemble, kMve, kEvidential, kGmm };
enum class Pooling { kMean, kMax };

std::string_view to_string(Scheme scheme);
Scheme scheme_from_string(std::string_view name);
std::string_view to_string(Pooling pooling);
Pooling pooling_from_string(std::string_view name);
// Head the scheme's network carries (GMM reuses the standard head).
HeadType head_for_scheme(Scheme scheme);

struct UncertaintyRecord {
  std::string structure_id;
  Scheme scheme = Scheme::kEnsemble;
  double u = 0.0;
  double aux1 = 0.0;  // ensemble: energy variance; evidential: aleatoric
  double aux2 = 0.0;
  double energy = 0.0;       // predicted (member mean for ensembles)
  Eigen::MatrixXd forces;    // predicted (member mean for ensembles)
};

struct EnsembleVariance {
  double energy = 0.0;
  double forces = 0.0;
};

// Sample variances over M >= 2 members: energy with divisor M - 1; forces as
// sum_m mean_over_3n (F_m - F_bar)^2 / (M - 1).
EnsembleVariance ensemble_uncertainty(const std::vector<PotentialOutput>& outputs);

double mve_uncertainty(const PotentialOutput& output);

struct EvidentialUncertainty {
  double aleatoric = 0.0;  // beta / (alpha - 1)
  double epistemic = 0.0;  // beta / (nu (alpha - 1))
};

EvidentialUncertainty evidential_uncertainty(double nu, double alpha, double beta);
EvidentialUncertainty evidential_uncertainty(const PotentialOutput& output);

// Per-atom negative log-likelihood of latent rows under the mixture, pooled.
Eigen::VectorXd gmm_atom_nll(const GmmModel& gmm, const Eigen::MatrixXd& latent);
double gmm_uncertainty(const GmmModel& gmm, const PotentialOutput& output,
                       Pooling pooling = Pooling::kMean);

// Everything needed to turn a structure into U.
struct UqContext {
  std::shared_ptr<const ModelBundle> model;
  Scheme scheme = Scheme::kEnsemble;
  std::shared_ptr<const GmmModel> gmm;
  Pooling pooling = Pooling::kMean;
  std::size_t member = 0;  // network used by single-network schemes

  void validate() const;
};

std::vector<UncertaintyRecord> evaluate_uncertainty(
    const std::vector<const Structure*>& structures, const UqContext& ctx);

struct UncertaintyGraph {
  diff::Var u;       // S x 1
  diff::Var energy;  // S x 1, member mean for ensembles
};

// U as a differentiable function of `positions` (laid out as in `batch`).
UncertaintyGraph uncertainty_graph(diff::Var positions, const AtomsBatch& batch,
                                   const UqContext& ctx);

// Per-atom GMM NLL as a graph node (N x 1).
diff::Var gmm_nll_graph(diff::Var latent, const GmmModel& gmm);

// Fits a mixture to at most `max_points` training latents of `member`, with K
// picked by select_k.
Selection fit_latent_gmm(const ModelBundle& model, std::size_t member,
                         const std::vector<const Structure*>& structures,
                         const std::vector<int>& candidates, std::uint64_t seed,
                         std::size_t max_points = 50000, const EmOptions& opts = {});

void write_uncertainty_csv(const std::vector<UncertaintyRecord>& records,
                           const std::filesystem::path& path);
std::vector<UncertaintyRecord> read_uncertainty_csv(const std::filesystem::path& path);

}  // namespace uqlab

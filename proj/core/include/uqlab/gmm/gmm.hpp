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
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace uqlab {

inline constexpr int kGmmFormatVersion = 1;

struct GmmModel {
  int k = 0;
  int d = 0;
  Eigen::VectorXd weights;                 // K, sums to 1
  Eigen::MatrixXd means;                   // K x D
  std::vector<Eigen::MatrixXd> covariances;
  std::vector<double> objective_trace;     // penalized log-likelihood per EM iteration
  double loglik = 0.0;                     // final (unpenalized) total log-likelihood
  int iterations = 0;
  bool converged = false;

  // Cached Cholesky factors; rebuilt by finalize().
  std::vector<Eigen::MatrixXd> cholesky;
  std::vector<double> log_norm;            // log pi_k - 0.5 log|2 pi Sigma_k|

  void finalize();
  void validate() const;
  // Per-point log densities log p(x) for the rows of `points`.
  Eigen::VectorXd log_density(const Eigen::MatrixXd& points) const;
  double log_density(const Eigen::RowVectorXd& point) const;
  // Hard assignments by maximum responsibility.
  std::vector<int> assign(const Eigen::MatrixXd& points) const;
  int free_parameters() const;
};

nlohmann::json gmm_to_json(const GmmModel& g);
GmmModel gmm_from_json(const nlohmann::json& j);

// k-means++ seeding followed by Lloyd iterations until assignments stop
// changing. Returns K x D centroids.
Eigen::MatrixXd kmeans_init(const Eigen::MatrixXd& points, int k, std::uint64_t seed);

struct EmOptions {
  double tol = 1e-6;
  int max_iter = 500;
  double regularization = 1e-6;  // relative to trace(data covariance) / D
};

// Full-covariance EM started from kmeans_init. The covariance M-step is
// Sigma_k = S_k / N_k + c / N_k I, the exact maximizer of the log-likelihood
// penalized by -c/2 sum_k tr(Sigma_k^-1), so the recorded objective is
// non-decreasing.
GmmModel em_fit(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                const EmOptions& opts = {});

struct SelectionRow {
  int k = 0;
  bool ok = false;
  double bic = 0.0;
  double silhouette = 0.0;  // NaN-free; K = 1 is reported as 0
  std::string error;
};

struct Selection {
  int chosen = 0;
  std::vector<SelectionRow> table;
  GmmModel model;
};

double bic(const GmmModel& g, std::size_t n_points);

// Mean silhouette of hard labels over at most `max_points` seeded samples.
double silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels,
                  std::uint64_t seed, std::size_t max_points = 2000);

// Smallest K within 2% of the best BIC whose silhouette is at least 0.9 of
// the best silhouette (K = 1 passes the silhouette test).
Selection select_k(const Eigen::MatrixXd& points, const std::vector<int>& candidates,
                   std::uint64_t seed, const EmOptions& opts = {});

nlohmann::json selection_to_json(const Selection& s);

}  // namespace uqlab

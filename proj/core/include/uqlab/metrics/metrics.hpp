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
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/common/error.hpp"

namespace uqlab {

class UndefinedMetricError : public DomainError {
 public:
  explicit UndefinedMetricError(const std::string& what) : DomainError(what) {}
};

struct EvalPair {
  std::string structure_id;
  double u = 0.0;
  double eps = 0.0;                 // error magnitude, >= 0
  std::vector<double> eps_signed;   // true - predicted components
};

// Fractional ranks starting at 1; ties share their average rank.
std::vector<double> fractional_ranks(std::span<const double> v);

// Linear interpolation between order statistics, p in [0, 100].
double percentile(std::span<const double> v, double p);

double spearman(std::span<const double> u, std::span<const double> eps);

// Positives are eps > percentile(eps, p); ties in U count one half.
double roc_auc(std::span<const double> u, std::span<const double> eps,
               double error_percentile = 20.0);

// Expected quantiles p_k = k / (grid - 1); observed(p) = fraction of signed
// errors with |e| <= z(p) sqrt(U), z the two-sided normal quantile. The area
// is the trapezoidal integral of |observed - p|.
double miscalibration_area(std::span<const double> u, std::span<const double> signed_err,
                           int grid = 100);

inline constexpr double kVarianceFloor = 1e-12;

struct Calibration {
  double a = 1.0;
  double b = 0.0;
  double objective = 0.0;     // mean Gaussian NLL on the fitting pairs
  int sweeps = 0;
  bool converged = false;
  bool boundary_hit = false;  // b or a*U+b pinned at the variance floor
  std::string source;         // "search", "identity" or "constant"
  std::vector<double> trace;  // objective after every sweep of the best start
};

// Mean of 0.5 [ln 2 pi + ln v + e^2 / v] with v = max(a U + b, floor).
double calibration_objective(std::span<const double> u, std::span<const double> err,
                             double a, double b, std::size_t* floored = nullptr);

// Minimizes calibration_objective over a >= 0, b >= floor by coordinate
// descent on (log a, log b) from a 3 x 3 grid of starts, then keeps the best
// of that and the fallbacks (1, 0) and (0, mean e^2).
Calibration calibrate(std::span<const double> u, std::span<const double> err);

double cnll(std::span<const double> u, std::span<const double> err, const Calibration& cal,
            std::size_t* floored = nullptr);

nlohmann::json calibration_to_json(const Calibration& c);
Calibration calibration_from_json(const nlohmann::json& j);

struct MetricOptions {
  double error_percentile = 20.0;
  int calibration_grid = 100;
};

struct MetricReport {
  std::size_t n = 0;
  double spearman = 0.0;
  double roc_auc = 0.0;
  double miscal_area = 0.0;
  double cnll = 0.0;
  Calibration calibration;
  std::vector<std::string> undefined;  // metrics that could not be computed
};

// Expands pairs to the component level used by the calibration metrics: every
// signed error component paired with its structure's U (eps itself when no
// components are stored).
void component_view(const std::vector<EvalPair>& pairs, std::vector<double>& u,
                    std::vector<double>& err);

// Calibrates on `validation` and scores `test`; undefined metrics are listed
// and left at zero.
MetricReport evaluate_metrics(const std::vector<EvalPair>& validation,
                              const std::vector<EvalPair>& test, const MetricOptions& opts = {});

nlohmann::json report_to_json(const MetricReport& r);

void write_eval_pairs(const std::vector<EvalPair>& pairs, const std::filesystem::path& path);
std::vector<EvalPair> read_eval_pairs(const std::filesystem::path& path);

}  // namespace uqlab

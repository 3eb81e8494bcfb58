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

// Brute-force reference metrics, written without sharing code with the
// library implementations.

#include <cmath>
#include <vector>

namespace uqlab::testing {

// 1 - 6 sum d^2 / (n (n^2 - 1)); valid for tie-free input.
inline double spearman_rank_formula(const std::vector<double>& u, const std::vector<double>& e) {
  const std::size_t n = u.size();
  auto rank_of = [](const std::vector<double>& v, std::size_t i) {
    double r = 1.0;
    for (double x : v) r += x < v[i] ? 1.0 : 0.0;
    return r;
  };
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rank_of(u, i) - rank_of(e, i);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

inline double percentile_linear(std::vector<double> v, double p) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      if (v[j] < v[i]) std::swap(v[i], v[j]);
    }
  }
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  return lo + 1 < v.size() ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
}

// Probability that a random positive outranks a random negative.
inline double auc_pairwise(const std::vector<double>& u, const std::vector<double>& e, double p) {
  const double cut = percentile_linear(e, p);
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(e[i] > cut)) continue;
    for (std::size_t j = 0; j < u.size(); ++j) {
      if (e[j] > cut) continue;
      pairs += 1.0;
      wins += u[i] > u[j] ? 1.0 : (u[i] == u[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// z with erf(z / sqrt 2) = p, by bisection.
inline double two_sided_z(double p) {
  double lo = 0.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (std::erf(mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double miscal_area_counting(const std::vector<double>& var, const std::vector<double>& err,
                                   int grid = 100) {
  std::vector<double> gap(static_cast<std::size_t>(grid));
  for (int k = 0; k < grid; ++k) {
    const double p = static_cast<double>(k) / (grid - 1);
    const double z = k == grid - 1 ? 0.0 : two_sided_z(p);
    double inside = 0.0;
    for (std::size_t i = 0; i < var.size(); ++i) {
      const bool hit = k == grid - 1 || std::abs(err[i]) <= z * std::sqrt(var[i]);
      inside += hit ? 1.0 : 0.0;
    }
    gap[static_cast<std::size_t>(k)] = std::abs(inside / static_cast<double>(var.size()) - p);
  }
  double area = 0.0;
  for (int k = 1; k < grid; ++k) {
    area += (gap[static_cast<std::size_t>(k)] + gap[static_cast<std::size_t>(k - 1)]) / 2.0 / (grid - 1);
  }
  return area;
}

}  // namespace uqlab::testing

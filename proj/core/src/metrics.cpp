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

#include "uqlab/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/tools/minima.hpp>

#include "uqlab/common/units.hpp"

namespace uqlab {

namespace {

void check_paired(std::span<const double> u, std::span<const double> eps, std::size_t min_n,
                  const char* metric) {
  if (u.size() != eps.size()) {
    throw DomainError(std::string(metric) + ": U and error lists differ in length");
  }
  if (u.size() < min_n) {
    throw UndefinedMetricError(std::string(metric) + " needs at least " + std::to_string(min_n) +
                               " pairs");
  }
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!std::isfinite(u[i]) || !std::isfinite(eps[i])) {
      throw DomainError(std::string(metric) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

const double kLog2Pi = std::log(2.0 * units::kPi);

}  // namespace

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i + 1;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

double percentile(std::span<const double> v, double p) {
  if (v.empty()) throw DomainError("percentile of an empty list");
  if (!(p >= 0.0 && p <= 100.0)) throw DomainError("percentile must lie in [0, 100]");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double pos = p / 100.0 * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

double spearman(std::span<const double> u, std::span<const double> eps) {
  check_paired(u, eps, 2, "spearman");
  const std::vector<double> ru = fractional_ranks(u);
  const std::vector<double> re = fractional_ranks(eps);
  const double mean = 0.5 * static_cast<double>(u.size() + 1);
  double cov = 0.0, vu = 0.0, ve = 0.0;
  for (std::size_t i = 0; i < ru.size(); ++i) {
    cov += (ru[i] - mean) * (re[i] - mean);
    vu += (ru[i] - mean) * (ru[i] - mean);
    ve += (re[i] - mean) * (re[i] - mean);
  }
  if (vu == 0.0 || ve == 0.0) throw UndefinedMetricError("spearman: zero rank variance");
  return std::clamp(cov / std::sqrt(vu * ve), -1.0, 1.0);
}

double roc_auc(std::span<const double> u, std::span<const double> eps, double error_percentile) {
  check_paired(u, eps, 2, "roc_auc");
  const double cut = percentile(eps, error_percentile);
  const std::vector<double> ranks = fractional_ranks(u);
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (eps[i] > cut) {
      positives += 1.0;
      rank_sum += ranks[i];
    }
  }
  const double negatives = static_cast<double>(eps.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) {
    throw UndefinedMetricError("roc_auc: thresholding left a single class");
  }
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

double miscalibration_area(std::span<const double> u, std::span<const double> signed_err, int grid) {
  check_paired(u, signed_err, 10, "miscalibration_area");
  if (grid < 2) throw DomainError("miscalibration grid needs at least two points");
  std::vector<double> ratio(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!(u[i] > 0.0)) {
      throw DomainError("miscalibration_area needs U > 0; calibrate first or add an offset");
    }
    ratio[i] = std::abs(signed_err[i]) / std::sqrt(u[i]);
  }
  std::sort(ratio.begin(), ratio.end());
  const boost::math::normal_distribution<double> normal;
  const double n = static_cast<double>(ratio.size());
  double area = 0.0;
  double prev = 0.0;
  for (int k = 0; k < grid; ++k) {
    const double p = static_cast<double>(k) / (grid - 1);
    const double z = k == grid - 1 ? std::numeric_limits<double>::infinity()
                                   : boost::math::quantile(normal, 0.5 * (1.0 + p));
    const double observed =
        static_cast<double>(std::upper_bound(ratio.begin(), ratio.end(), z) - ratio.begin()) / n;
    const double gap = std::abs(observed - p);
    if (k > 0) area += 0.5 * (gap + prev) / (grid - 1);
    prev = gap;
  }
  return area;
}

double calibration_objective(std::span<const double> u, std::span<const double> err, double a,
                             double b, std::size_t* floored) {
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    double v = a * u[i] + b;
    if (!(v > kVarianceFloor)) {
      v = kVarianceFloor;
      ++hits;
    }
    total += 0.5 * (kLog2Pi + std::log(v) + err[i] * err[i] / v);
  }
  if (floored) *floored = hits;
  return total / static_cast<double>(u.size());
}

namespace {

constexpr double kLogMin = -60.0;
constexpr double kLogMax = 60.0;
constexpr double kObjectiveTol = 1e-10;
constexpr int kMaxSweeps = 500;

struct Search {
  double la = 0.0;
  double lb = 0.0;
  double objective = 0.0;
  int sweeps = 0;
  bool converged = false;
  std::vector<double> trace;
};

Search descend(std::span<const double> u, std::span<const double> err, double la, double lb) {
  const double lb_min = std::log(kVarianceFloor);
  auto f = [&](double x, double y) {
    return calibration_objective(u, err, std::exp(x), std::exp(y));
  };
  Search s{la, lb, f(la, lb), 0, false, {}};
  const int bits = std::numeric_limits<double>::digits / 2;
  while (s.sweeps < kMaxSweeps) {
    ++s.sweeps;
    const double before = s.objective;
    auto ra = boost::math::tools::brent_find_minima([&](double x) { return f(x, s.lb); },
                                                    kLogMin, kLogMax, bits);
    if (ra.second < s.objective) {
      s.la = ra.first;
      s.objective = ra.second;
    }
    auto rb = boost::math::tools::brent_find_minima([&](double y) { return f(s.la, y); }, lb_min,
                                                    kLogMax, bits);
    if (rb.second < s.objective) {
      s.lb = rb.first;
      s.objective = rb.second;
    }
    s.trace.push_back(s.objective);
    if (before - s.objective < kObjectiveTol) {
      s.converged = true;
      break;
    }
  }
  return s;
}

}  // namespace

Calibration calibrate(std::span<const double> u, std::span<const double> err) {
  check_paired(u, err, 2, "calibrate");
  double mean_sq = 0.0;
  double mean_u = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mean_sq += err[i] * err[i];
    mean_u += std::abs(u[i]);
  }
  mean_sq /= static_cast<double>(u.size());
  mean_u /= static_cast<double>(u.size());
  const double scale_a = std::log(std::max(mean_sq, kVarianceFloor) / std::max(mean_u, kVarianceFloor));
  const double scale_b = std::log(std::max(mean_sq, kVarianceFloor));

  Search best;
  best.objective = std::numeric_limits<double>::infinity();
  for (double da : {-2.0, 0.0, 2.0}) {
    for (double db : {-2.0, 0.0, 2.0}) {
      const double la = std::clamp(scale_a + da, kLogMin, kLogMax);
      const double lb = std::clamp(scale_b + db, std::log(kVarianceFloor), kLogMax);
      Search s = descend(u, err, la, lb);
      if (s.objective < best.objective) best = std::move(s);
    }
  }
  if (!std::isfinite(best.objective)) {
    std::ostringstream msg;
    msg << "calibration diverged; objective trace:";
    for (double t : best.trace) msg << ' ' << t;
    throw NumericError(msg.str());
  }

  Calibration c;
  c.a = std::exp(best.la);
  c.b = std::exp(best.lb);
  c.objective = best.objective;
  c.sweeps = best.sweeps;
  c.converged = best.converged;
  c.trace = std::move(best.trace);
  c.source = "search";
  const double identity = calibration_objective(u, err, 1.0, 0.0);
  const double constant = calibration_objective(u, err, 0.0, std::max(mean_sq, kVarianceFloor));
  if (identity < c.objective) {
    c.a = 1.0;
    c.b = 0.0;
    c.objective = identity;
    c.source = "identity";
  }
  if (constant < c.objective) {
    c.a = 0.0;
    c.b = std::max(mean_sq, kVarianceFloor);
    c.objective = constant;
    c.source = "constant";
  }
  std::size_t floored = 0;
  calibration_objective(u, err, c.a, c.b, &floored);
  c.boundary_hit = floored > 0 || c.b <= kVarianceFloor * (1.0 + 1e-6);
  return c;
}

double cnll(std::span<const double> u, std::span<const double> err, const Calibration& cal,
            std::size_t* floored) {
  check_paired(u, err, 1, "cnll");
  return calibration_objective(u, err, cal.a, cal.b, floored);
}

nlohmann::json calibration_to_json(const Calibration& c) {
  return {{"a", c.a},
          {"b", c.b},
          {"objective", c.objective},
          {"sweeps", c.sweeps},
          {"converged", c.converged},
          {"boundary_hit", c.boundary_hit},
          {"source", c.source}};
}

Calibration calibration_from_json(const nlohmann::json& j) {
  Calibration c;
  c.a = j.at("a").get<double>();
  c.b = j.at("b").get<double>();
  c.objective = j.at("objective").get<double>();
  c.sweeps = j.at("sweeps").get<int>();
  c.converged = j.at("converged").get<bool>();
  c.boundary_hit = j.at("boundary_hit").get<bool>();
  c.source = j.at("source").get<std::string>();
  return c;
}

void component_view(const std::vector<EvalPair>& pairs, std::vector<double>& u,
                    std::vector<double>& err) {
  u.clear();
  err.clear();
  for (const EvalPair& p : pairs) {
    if (p.eps_signed.empty()) {
      u.push_back(p.u);
      err.push_back(p.eps);
      continue;
    }
    for (double e : p.eps_signed) {
      u.push_back(p.u);
      err.push_back(e);
    }
  }
}

MetricReport evaluate_metrics(const std::vector<EvalPair>& validation,
                              const std::vector<EvalPair>& test, const MetricOptions& opts) {
  MetricReport r;
  r.n = test.size();
  std::vector<double> u, eps;
  for (const EvalPair& p : test) {
    u.push_back(p.u);
    eps.push_back(p.eps);
  }
  auto attempt = [&](const char* name, auto&& fn) {
    try {
      fn();
    } catch (const DomainError&) {
      r.undefined.emplace_back(name);
    }
  };
  attempt("spearman", [&] { r.spearman = spearman(u, eps); });
  attempt("roc_auc", [&] { r.roc_auc = roc_auc(u, eps, opts.error_percentile); });
  std::vector<double> cu, ce;
  component_view(test, cu, ce);
  std::vector<double> vu, ve;
  component_view(validation, vu, ve);
  attempt("calibration", [&] { r.calibration = calibrate(vu, ve); });
  const bool calibrated = std::find(r.undefined.begin(), r.undefined.end(), "calibration") ==
                          r.undefined.end();
  attempt("miscal_area", [&] {
    // Calibrated variances make the area meaningful for offset-free U (GMM NLL).
    std::vector<double> var(cu.size());
    for (std::size_t i = 0; i < cu.size(); ++i) {
      var[i] = calibrated ? std::max(r.calibration.a * cu[i] + r.calibration.b, kVarianceFloor)
                          : cu[i];
    }
    r.miscal_area = miscalibration_area(var, ce, opts.calibration_grid);
  });
  if (calibrated) attempt("cnll", [&] { r.cnll = cnll(cu, ce, r.calibration); });
  else r.undefined.emplace_back("cnll");
  return r;
}

nlohmann::json report_to_json(const MetricReport& r) {
  return {{"n", r.n},
          {"spearman", r.spearman},
          {"roc_auc", r.roc_auc},
          {"miscal_area", r.miscal_area},
          {"cnll", r.cnll},
          {"a_star", r.calibration.a},
          {"b_star", r.calibration.b},
          {"calibration", calibration_to_json(r.calibration)},
          {"undefined", r.undefined}};
}

void write_eval_pairs(const std::vector<EvalPair>& pairs, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "structure_id,U,eps,eps_signed...\n";
  for (const EvalPair& p : pairs) {
    out << p.structure_id << ',' << p.u << ',' << p.eps;
    for (double e : p.eps_signed) out << ',' << e;
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<EvalPair> read_eval_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("structure_id,U,eps", 0) != 0) {
    throw IoError(path.string() + ": missing EvalPair CSV header");
  }
  std::vector<EvalPair> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 3) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected at least 3 columns");
    }
    EvalPair p;
    p.structure_id = cells[0];
    try {
      p.u = std::stod(cells[1]);
      p.eps = std::stod(cells[2]);
      for (std::size_t k = 3; k < cells.size(); ++k) p.eps_signed.push_back(std::stod(cells[k]));
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (p.eps < 0.0) throw IoError(path.string() + ":" + std::to_string(lineno) + ": negative eps");
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace uqlab

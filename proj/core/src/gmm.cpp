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

#include "uqlab/gmm/gmm.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "uqlab/common/error.hpp"
#include "uqlab/common/random.hpp"
#include "uqlab/common/units.hpp"

namespace uqlab {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

void GmmModel::finalize() {
  cholesky.assign(static_cast<std::size_t>(k), MatrixXd());
  log_norm.assign(static_cast<std::size_t>(k), 0.0);
  for (int c = 0; c < k; ++c) {
    Eigen::LLT<MatrixXd> llt(covariances[static_cast<std::size_t>(c)]);
    if (llt.info() != Eigen::Success) {
      throw NumericError("covariance of component " + std::to_string(c) + " is not positive definite");
    }
    const MatrixXd l = llt.matrixL();
    const double log_det = 2.0 * l.diagonal().array().log().sum();
    cholesky[static_cast<std::size_t>(c)] = l;
    log_norm[static_cast<std::size_t>(c)] =
        std::log(weights(c)) - 0.5 * (d * std::log(2.0 * units::kPi) + log_det);
  }
}

void GmmModel::validate() const {
  if (k < 1 || d < 1) throw DomainError("GMM needs K >= 1 and D >= 1");
  if (weights.size() != k || means.rows() != k || means.cols() != d ||
      covariances.size() != static_cast<std::size_t>(k)) {
    throw DomainError("GMM shapes are inconsistent");
  }
  if ((weights.array() <= 0.0).any() || std::abs(weights.sum() - 1.0) > 1e-9) {
    throw DomainError("GMM weights must be positive and sum to 1");
  }
  for (const MatrixXd& c : covariances) {
    if (c.rows() != d || c.cols() != d || !c.allFinite() ||
        (c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, c.cwiseAbs().maxCoeff())) {
      throw DomainError("GMM covariance must be a finite symmetric D x D matrix");
    }
  }
}

namespace {

// N x K matrix of log pi_k + log N(x_i | mu_k, Sigma_k).
MatrixXd component_log_density(const GmmModel& g, const MatrixXd& points) {
  MatrixXd out(points.rows(), g.k);
  for (int c = 0; c < g.k; ++c) {
    const MatrixXd centred = points.rowwise() - g.means.row(c);
    const MatrixXd z = g.cholesky[static_cast<std::size_t>(c)]
                           .triangularView<Eigen::Lower>()
                           .solve(centred.transpose());
    out.col(c) = (-0.5 * z.colwise().squaredNorm().transpose()).array() +
                 g.log_norm[static_cast<std::size_t>(c)];
  }
  return out;
}

VectorXd row_logsumexp(const MatrixXd& a) {
  const VectorXd m = a.rowwise().maxCoeff();
  return m + (a.colwise() - m).array().exp().rowwise().sum().log().matrix();
}

}  // namespace

VectorXd GmmModel::log_density(const MatrixXd& points) const {
  if (points.cols() != d) {
    throw DomainError("point dimension " + std::to_string(points.cols()) +
                      " does not match GMM dimension " + std::to_string(d));
  }
  return row_logsumexp(component_log_density(*this, points));
}

double GmmModel::log_density(const RowVectorXd& point) const {
  return log_density(MatrixXd(point))(0);
}

std::vector<int> GmmModel::assign(const MatrixXd& points) const {
  const MatrixXd a = component_log_density(*this, points);
  std::vector<int> labels(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    Eigen::Index best = 0;
    a.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

int GmmModel::free_parameters() const { return k - 1 + k * d + k * d * (d + 1) / 2; }

nlohmann::json gmm_to_json(const GmmModel& g) {
  nlohmann::json means = nlohmann::json::array();
  nlohmann::json covs = nlohmann::json::array();
  for (int c = 0; c < g.k; ++c) {
    std::vector<double> mu(static_cast<std::size_t>(g.d));
    for (int j = 0; j < g.d; ++j) mu[static_cast<std::size_t>(j)] = g.means(c, j);
    means.push_back(mu);
    std::vector<double> flat;
    const MatrixXd& s = g.covariances[static_cast<std::size_t>(c)];
    for (int r = 0; r < g.d; ++r) {
      for (int col = 0; col < g.d; ++col) flat.push_back(s(r, col));
    }
    covs.push_back(flat);
  }
  return {{"version", kGmmFormatVersion},
          {"K", g.k},
          {"D", g.d},
          {"weights", std::vector<double>(g.weights.data(), g.weights.data() + g.k)},
          {"means", means},
          {"covariances", covs},
          {"loglik", g.loglik},
          {"iterations", g.iterations},
          {"converged", g.converged}};
}

GmmModel gmm_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != kGmmFormatVersion) throw IoError("unsupported GMM version");
    GmmModel g;
    g.k = j.at("K").get<int>();
    g.d = j.at("D").get<int>();
    const auto w = j.at("weights").get<std::vector<double>>();
    g.weights = Eigen::Map<const VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    g.means.resize(g.k, g.d);
    for (int c = 0; c < g.k; ++c) {
      const auto mu = j.at("means").at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      if (mu.size() != static_cast<std::size_t>(g.d)) throw IoError("GMM mean has wrong length");
      for (int q = 0; q < g.d; ++q) g.means(c, q) = mu[static_cast<std::size_t>(q)];
      const auto flat = j.at("covariances").at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      if (flat.size() != static_cast<std::size_t>(g.d * g.d)) throw IoError("GMM covariance has wrong size");
      MatrixXd s(g.d, g.d);
      for (int r = 0; r < g.d; ++r) {
        for (int q = 0; q < g.d; ++q) s(r, q) = flat[static_cast<std::size_t>(r * g.d + q)];
      }
      g.covariances.push_back(s);
    }
    g.loglik = j.value("loglik", 0.0);
    g.iterations = j.value("iterations", 0);
    g.converged = j.value("converged", false);
    g.validate();
    g.finalize();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed GMM document: ") + e.what());
  }
}

MatrixXd kmeans_init(const MatrixXd& points, int k, std::uint64_t seed) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw DomainError("k-means needs K >= 1");
  if (n < k) {
    throw DomainError("k-means needs at least K points (N = " + std::to_string(n) +
                      ", K = " + std::to_string(k) + ")");
  }
  Rng rng(derive_seed(seed, {0x6b6d65616e73}));
  MatrixXd centroids(k, points.cols());
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  Eigen::Index pick = first(rng);
  centroids.row(0) = points.row(pick);
  taken[static_cast<std::size_t>(pick)] = true;
  VectorXd nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest(i);
        if (target <= 0.0 && nearest(i) > 0.0) {
          pick = i;
          break;
        }
      }
      while (nearest(pick) == 0.0 && pick > 0) --pick;
    } else {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> any(0, free.size() - 1);
      pick = free[any(rng)];
    }
    centroids.row(c) = points.row(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      if (labels[static_cast<std::size_t>(i)] != static_cast<int>(best)) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
        changed = true;
      }
    }
    if (!changed) break;
    MatrixXd sums = MatrixXd::Zero(k, points.cols());
    VectorXd counts = VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0.0) centroids.row(c) = sums.row(c) / counts(c);
    }
  }
  return centroids;
}

namespace {

double penalty(const GmmModel& g, double c) {
  double p = 0.0;
  for (int q = 0; q < g.k; ++q) {
    const MatrixXd& l = g.cholesky[static_cast<std::size_t>(q)];
    const MatrixXd inv = l.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(g.d, g.d));
    p += inv.squaredNorm();  // tr(Sigma^-1) = ||L^-1||_F^2
  }
  return -0.5 * c * p;
}

}  // namespace

GmmModel em_fit(const MatrixXd& points, int k, std::uint64_t seed, const EmOptions& opts) {
  const Eigen::Index n = points.rows();
  const auto d = static_cast<int>(points.cols());
  if (!(opts.tol > 0.0)) throw DomainError("EM tolerance must be positive");
  if (d < 1) throw DomainError("EM needs D >= 1");
  if (!points.allFinite()) throw NumericError("EM input contains non-finite values");
  if (n <= static_cast<Eigen::Index>(k) * d) {
    spdlog::warn("EM with N = {} <= K * D = {}; covariances rely on regularization", n, k * d);
  }
  const RowVectorXd global_mean = points.colwise().mean();
  const MatrixXd centred = points.rowwise() - global_mean;
  const double data_trace = centred.squaredNorm() / static_cast<double>(n);
  const double scale = std::max(data_trace / d, 1e-300);
  const double c = opts.regularization * scale * static_cast<double>(n) / k;

  GmmModel g;
  g.k = k;
  g.d = d;
  g.means = kmeans_init(points, k, seed);
  // Initial responsibilities: hard k-means labels.
  MatrixXd resp = MatrixXd::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (g.means.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
    resp(i, best) = 1.0;
  }

  auto m_step = [&](int iteration) {
    const VectorXd nk = resp.colwise().sum().transpose();
    g.weights = (nk.array() + 1e-300) / (nk.sum() + k * 1e-300);
    g.means.resize(k, d);
    g.covariances.assign(static_cast<std::size_t>(k), MatrixXd());
    for (int q = 0; q < k; ++q) {
      const double mass = std::max(nk(q), 1e-300);
      g.means.row(q) = (resp.col(q).transpose() * points) / mass;
      const MatrixXd x = points.rowwise() - g.means.row(q);
      MatrixXd s = (x.array().colwise() * resp.col(q).array()).matrix().transpose() * x;
      s = ((s + s.transpose()) * (0.5 / mass)).eval();
      s.diagonal().array() += c / mass;
      g.covariances[static_cast<std::size_t>(q)] = s;
    }
    try {
      g.finalize();
    } catch (const NumericError& e) {
      throw NumericError("EM fit failed at iteration " + std::to_string(iteration) + ": " + e.what());
    }
  };

  m_step(0);
  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    const MatrixXd a = component_log_density(g, points);
    const VectorXd lse = row_logsumexp(a);
    const double ll = lse.sum();
    if (!std::isfinite(ll)) {
      throw NumericError("EM log-likelihood is not finite at iteration " + std::to_string(iter));
    }
    const double objective = ll + penalty(g, c);
    g.objective_trace.push_back(objective);
    g.loglik = ll;
    g.iterations = iter;
    if (objective - previous < opts.tol) {
      g.converged = true;
      break;
    }
    previous = objective;
    resp = (a.colwise() - lse).array().exp();
    m_step(iter);
  }
  if (!g.converged) {
    g.loglik = g.log_density(points).sum();
  }
  return g;
}

double bic(const GmmModel& g, std::size_t n_points) {
  return -2.0 * g.loglik + g.free_parameters() * std::log(static_cast<double>(n_points));
}

double silhouette(const MatrixXd& points, const std::vector<int>& labels, std::uint64_t seed,
                  std::size_t max_points) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (labels.size() != n) throw DomainError("silhouette labels do not match points");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n > max_points) {
    Rng rng(derive_seed(seed, {0x73696c68}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
  }
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<int> sizes(static_cast<std::size_t>(k), 0);
  for (std::size_t i : idx) ++sizes[static_cast<std::size_t>(labels[i])];
  const auto used = std::count_if(sizes.begin(), sizes.end(), [](int s) { return s > 0; });
  if (used < 2) return 0.0;
  double total = 0.0;
  std::vector<double> sums(static_cast<std::size_t>(k));
  for (std::size_t i : idx) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j : idx) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(labels[j])] += (points.row(i) - points.row(j)).norm();
    }
    const auto own = static_cast<std::size_t>(labels[i]);
    if (sizes[own] <= 1) continue;  // singleton: s = 0
    const double a = sums[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < sums.size(); ++q) {
      if (q != own && sizes[q] > 0) b = std::min(b, sums[q] / sizes[q]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(idx.size());
}

Selection select_k(const MatrixXd& points, const std::vector<int>& candidates,
                   std::uint64_t seed, const EmOptions& opts) {
  if (candidates.empty()) throw DomainError("select_k needs at least one candidate");
  Selection out;
  std::vector<GmmModel> fits;
  for (int k : candidates) {
    SelectionRow row;
    row.k = k;
    try {
      GmmModel g = em_fit(points, k, seed, opts);
      row.bic = bic(g, static_cast<std::size_t>(points.rows()));
      row.silhouette = k > 1 ? silhouette(points, g.assign(points), seed) : 0.0;
      row.ok = true;
      fits.push_back(std::move(g));
    } catch (const Error& e) {
      row.error = e.what();
      fits.emplace_back();
    }
    out.table.push_back(row);
  }
  double best_bic = std::numeric_limits<double>::infinity();
  double best_sil = -std::numeric_limits<double>::infinity();
  for (const SelectionRow& r : out.table) {
    if (!r.ok) continue;
    best_bic = std::min(best_bic, r.bic);
    if (r.k > 1) best_sil = std::max(best_sil, r.silhouette);
  }
  if (!std::isfinite(best_bic)) throw NumericError("every GMM fit failed in select_k");
  std::optional<std::size_t> chosen;
  for (std::size_t i = 0; i < out.table.size(); ++i) {
    const SelectionRow& r = out.table[i];
    if (!r.ok || r.bic > best_bic + 0.02 * std::abs(best_bic)) continue;
    const bool sil_ok = r.k == 1 || !std::isfinite(best_sil) ||
                        r.silhouette >= (best_sil >= 0.0 ? 0.9 * best_sil : best_sil / 0.9);
    if (!sil_ok) continue;
    if (!chosen || r.k < out.table[*chosen].k) chosen = i;
  }
  if (!chosen) {
    for (std::size_t i = 0; i < out.table.size(); ++i) {
      if (out.table[i].ok && out.table[i].bic == best_bic) chosen = i;
    }
  }
  out.chosen = out.table[*chosen].k;
  out.model = std::move(fits[*chosen]);
  spdlog::info("select_k chose K = {}", out.chosen);
  return out;
}

nlohmann::json selection_to_json(const Selection& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SelectionRow& r : s.table) {
    rows.push_back({{"K", r.k}, {"ok", r.ok}, {"bic", r.bic}, {"silhouette", r.silhouette},
                    {"error", r.error}});
  }
  return {{"chosen", s.chosen}, {"table", rows}};
}

}  // namespace uqlab

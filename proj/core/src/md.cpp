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

#include "uqlab/md/md.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "uqlab/common/error.hpp"
#include "uqlab/common/parallel.hpp"
#include "uqlab/common/units.hpp"

namespace uqlab {

ModelForceField::ModelForceField(std::shared_ptr<const ModelBundle> model,
                                 std::size_t member)
    : model_(std::move(model)), member_(member) {
  if (member_ >= model_->size()) throw DomainError("member index out of range");
}

ForceEval ModelForceField::evaluate(const Structure& s) const {
  PotentialOutput out = predict(s, *model_, member_);
  return {out.energy, std::move(out.forces)};
}

EnsembleForceField::EnsembleForceField(std::shared_ptr<const ModelBundle> model)
    : model_(std::move(model)) {
  if (model_->size() == 0) throw DomainError("empty model bundle");
}

ForceEval EnsembleForceField::evaluate(const Structure& s) const {
  ForceEval acc{0.0, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.size()), 3)};
  for (std::size_t m = 0; m < model_->size(); ++m) {
    const PotentialOutput out = predict(s, *model_, m);
    acc.energy += out.energy;
    acc.forces += out.forces;
  }
  const double inv = 1.0 / static_cast<double>(model_->size());
  acc.energy *= inv;
  acc.forces *= inv;
  return acc;
}

StabilityRules StabilityRules::preset(std::string_view name) {
  StabilityRules r;
  if (name == "ammonia") {
    r.min_distance = 0.75;
    r.max_distance = 2.25;
    r.energy_floor = 0.0;
  } else if (name == "silica") {
    r.min_distance = 1.0;
    r.max_kinetic = 10000.0;
    r.fail_on_zero_kinetic = true;
  } else if (name != "none") {
    throw ConfigError("unknown stability preset '" + std::string(name) + "'");
  }
  return r;
}

namespace {

template <class T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  j[key] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> get_optional(const nlohmann::json& j, const char* key,
                                   std::optional<double> fallback) {
  if (!j.contains(key)) return fallback;
  if (j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

nlohmann::json rules_to_json(const StabilityRules& r) {
  nlohmann::json j;
  put_optional(j, "min_distance", r.min_distance);
  put_optional(j, "max_distance", r.max_distance);
  put_optional(j, "energy_floor", r.energy_floor);
  put_optional(j, "max_kinetic", r.max_kinetic);
  j["fail_on_zero_kinetic"] = r.fail_on_zero_kinetic;
  return j;
}

StabilityRules rules_from_json(const nlohmann::json& j) {
  StabilityRules r = StabilityRules::preset(j.value("preset", std::string("none")));
  r.min_distance = get_optional(j, "min_distance", r.min_distance);
  r.max_distance = get_optional(j, "max_distance", r.max_distance);
  r.energy_floor = get_optional(j, "energy_floor", r.energy_floor);
  r.max_kinetic = get_optional(j, "max_kinetic", r.max_kinetic);
  r.fail_on_zero_kinetic = j.value("fail_on_zero_kinetic", r.fail_on_zero_kinetic);
  return r;
}

void MDConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("md.dt must be positive");
  if (steps < 1) throw ConfigError("md.steps must be >= 1");
  if (frame_stride < 1) throw ConfigError("md.frame_stride must be >= 1");
  if (ensemble == Ensemble::kNvt) {
    if (!(temperature > 0.0)) throw ConfigError("md.temperature must be positive for nvt");
    if (thermostat_q < 0.0) throw ConfigError("md.thermostat_q must be positive");
  }
}

namespace {

double degrees_of_freedom(std::size_t n) {
  return n > 1 ? 3.0 * static_cast<double>(n) - 3.0 : 3.0;
}

Eigen::VectorXd masses_of(const Structure& s, const ForceField& ff) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    m(static_cast<Eigen::Index>(i)) = ff.mass(s.atomic_numbers[i]);
  }
  return m;
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

double MDConfig::resolved_q(std::size_t n_atoms) const {
  if (thermostat_q > 0.0) return thermostat_q;
  const double tau = 20.0 * dt;
  return degrees_of_freedom(n_atoms) * units::kBoltzmann * temperature * tau * tau;
}

double kinetic_energy(const Eigen::MatrixXd& velocities, const Eigen::VectorXd& masses) {
  return 0.5 * units::kMvvToKcal *
         (velocities.rowwise().squaredNorm().array() * masses.array()).sum();
}

Eigen::MatrixXd maxwell_boltzmann(const Structure& s, const ForceField& ff,
                                  double temperature, Rng& rng) {
  const Eigen::VectorXd m = masses_of(s, ff);
  const auto n = m.size();
  Eigen::MatrixXd v(n, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sigma = std::sqrt(units::kBoltzmann * temperature * units::kForceToAccel / m(i));
    for (int k = 0; k < 3; ++k) v(i, k) = sigma * normal(rng);
  }
  if (n > 1) {
    const Eigen::RowVector3d p = (v.array().colwise() * m.array()).colwise().sum();
    v.rowwise() -= p / m.sum();
  }
  return v;
}

std::string check_stability(const Structure& s, double energy, double kinetic,
                            const StabilityRules& rules) {
  if (!std::isfinite(kinetic) || !std::isfinite(energy) || !all_finite(s.positions)) {
    return "non_finite";
  }
  const auto n = static_cast<Eigen::Index>(s.size());
  if (rules.min_distance || rules.max_distance) {
    for (Eigen::Index i = 0; i < n; ++i) {
      double nearest = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double d = displacement(s, i, j).norm();
        nearest = std::min(nearest, d);
      }
      if (rules.min_distance && nearest < *rules.min_distance) return "min_distance";
      if (rules.max_distance && n > 1 && nearest > *rules.max_distance) {
        return "max_distance";
      }
    }
  }
  if (rules.energy_floor && energy < *rules.energy_floor) return "energy_floor";
  if (rules.fail_on_zero_kinetic && kinetic == 0.0) return "zero_kinetic";
  if (rules.max_kinetic && kinetic > *rules.max_kinetic) return "max_kinetic";
  return {};
}

Trajectory run_md(const Structure& init, std::optional<Eigen::MatrixXd> velocities,
                  const ForceField& ff, const MDConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  init.validate();
  Rng rng(seed);
  Structure s = init;
  const Eigen::VectorXd m = masses_of(s, ff);
  Eigen::MatrixXd v = velocities ? *velocities : maxwell_boltzmann(s, ff, cfg.temperature, rng);
  if (v.rows() != s.positions.rows() || v.cols() != 3) {
    throw DomainError("velocity shape does not match the structure");
  }
  const Eigen::ArrayXd accel_scale = units::kForceToAccel / m.array();
  const double n_dof = degrees_of_freedom(s.size());
  const double kt = units::kBoltzmann * cfg.temperature;
  const double q = cfg.ensemble == Ensemble::kNvt ? cfg.resolved_q(s.size()) : 0.0;
  const double half = 0.5 * cfg.dt;

  Trajectory traj;
  traj.structure_id = init.id;
  traj.atomic_numbers = init.atomic_numbers;
  traj.steps = cfg.steps;
  traj.stable_steps = cfg.steps;

  auto record = [&](int step, double e, double ke) {
    traj.frames.push_back({step, s.positions, v, e, ke});
  };
  auto fail = [&](int step, std::string reason) {
    traj.stable_steps = step;
    traj.failure = std::move(reason);
  };

  ForceEval f;
  try {
    f = ff.evaluate(s);
  } catch (const NumericError&) {
    fail(0, "model_nan");
    return traj;
  }
  double ke = kinetic_energy(v, m);
  record(0, f.energy, ke);
  if (std::string reason = check_stability(s, f.energy, ke, cfg.rules); !reason.empty()) {
    fail(0, std::move(reason));
    return traj;
  }

  double xi = 0.0;
  double temperature_sum = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    if (cfg.ensemble == Ensemble::kNvt) {
      xi += half * (2.0 * ke - n_dof * kt) / q;
      v *= std::exp(-xi * half);
    }
    v.array() += half * (f.forces.array().colwise() * accel_scale);
    s.positions += cfg.dt * v;
    try {
      if (!all_finite(s.positions)) throw NumericError("non-finite positions");
      f = ff.evaluate(s);
    } catch (const NumericError&) {
      fail(step, "model_nan");
      break;
    }
    v.array() += half * (f.forces.array().colwise() * accel_scale);
    ke = kinetic_energy(v, m);
    if (cfg.ensemble == Ensemble::kNvt) {
      v *= std::exp(-xi * half);
      ke = kinetic_energy(v, m);
      xi += half * (2.0 * ke - n_dof * kt) / q;
    }
    temperature_sum += 2.0 * ke / (n_dof * units::kBoltzmann);
    const bool last = step + 1 == cfg.steps;
    if ((step + 1) % cfg.frame_stride == 0 || last) record(step + 1, f.energy, ke);
    if (std::string reason = check_stability(s, f.energy, ke, cfg.rules); !reason.empty()) {
      if ((step + 1) % cfg.frame_stride != 0 && !last) record(step + 1, f.energy, ke);
      fail(step, std::move(reason));
      break;
    }
  }
  const int done = traj.failure.empty() ? cfg.steps : std::max(traj.stable_steps, 1);
  traj.mean_kinetic_temperature = temperature_sum / done;
  return traj;
}

std::vector<Trajectory> run_md_batch(const std::vector<Structure>& inits,
                                     std::size_t count, const ForceField& ff,
                                     const MDConfig& cfg, std::uint64_t seed,
                                     std::size_t threads) {
  if (inits.empty()) throw DomainError("no initial structures for MD");
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t k) {
    out[k] = run_md(inits[k % inits.size()], std::nullopt, ff, cfg, derive_seed(seed, {k}));
  });
  return out;
}

StabilitySummary stability_fraction(const std::vector<Trajectory>& trajs, double dt) {
  if (trajs.empty()) throw DomainError("stability_fraction needs trajectories");
  StabilitySummary s;
  s.count = trajs.size();
  std::map<std::string, std::size_t> reasons;
  double stable = 0.0;
  double time = 0.0;
  for (const Trajectory& t : trajs) {
    if (t.stable_steps == t.steps) stable += 1.0;
    time += t.stable_steps * dt;
    if (!t.failure.empty()) ++reasons[t.failure];
  }
  s.fraction = stable / static_cast<double>(trajs.size());
  s.mean_stable_time = time / static_cast<double>(trajs.size());
  s.failures.assign(reasons.begin(), reasons.end());
  return s;
}

nlohmann::json summary_to_json(const StabilitySummary& s) {
  nlohmann::json failures = nlohmann::json::object();
  for (const auto& [reason, n] : s.failures) failures[reason] = n;
  return {{"fraction", s.fraction},
          {"mean_stable_time_fs", s.mean_stable_time},
          {"count", s.count},
          {"failures", failures}};
}

void write_extxyz(const Trajectory& traj, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  for (const Frame& f : traj.frames) {
    out << f.positions.rows() << '\n';
    out << "Properties=species:S:1:pos:R:3:vel:R:3 energy=" << f.energy
        << " kinetic_energy=" << f.kinetic << " step=" << f.step << '\n';
    for (Eigen::Index i = 0; i < f.positions.rows(); ++i) {
      out << traj.atomic_numbers[static_cast<std::size_t>(i)];
      for (int k = 0; k < 3; ++k) out << ' ' << f.positions(i, k);
      for (int k = 0; k < 3; ++k) out << ' ' << f.velocities(i, k);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace uqlab

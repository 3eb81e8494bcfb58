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

#include "uqlab/adversarial/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "uqlab/common/error.hpp"
#include "uqlab/common/parallel.hpp"
#include "uqlab/common/random.hpp"
#include "uqlab/common/units.hpp"
#include "uqlab/potential/serialization.hpp"

namespace uqlab {

using diff::Matrix;
using diff::Tape;
using diff::Var;

void AdversarialConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("adversarial temperature must be > 0");
  if (steps < 1) throw ConfigError("adversarial steps must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("adversarial learning rate must be >= 0");
  if (!(init_scale >= 0.0)) throw ConfigError("adversarial init_scale must be >= 0");
  if (!(dedup_threshold >= 0.0)) throw ConfigError("adversarial dedup_threshold must be >= 0");
  if (seeds < 1) throw ConfigError("adversarial seeds must be >= 1");
}

nlohmann::json adversarial_to_json(const AdversarialConfig& c) {
  return {{"temperature", c.temperature},     {"learning_rate", c.learning_rate},
          {"steps", c.steps},                 {"seeds", c.seeds},
          {"samples", c.samples},             {"init_scale", c.init_scale},
          {"dedup_threshold", c.dedup_threshold}};
}

AdversarialConfig adversarial_from_json(const nlohmann::json& j) {
  AdversarialConfig c;
  if (!j.is_object()) throw ConfigError("adversarial section must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "temperature") c.temperature = value.get<double>();
    else if (key == "learning_rate") c.learning_rate = value.get<double>();
    else if (key == "steps") c.steps = value.get<int>();
    else if (key == "seeds") c.seeds = value.get<std::size_t>();
    else if (key == "samples") c.samples = value.get<std::size_t>();
    else if (key == "init_scale") c.init_scale = value.get<double>();
    else if (key == "dedup_threshold") c.dedup_threshold = value.get<double>();
    else throw ConfigError("unknown adversarial key '" + key + "'");
  }
  c.validate();
  return c;
}

namespace {

double log_partition(std::span<const double> train_energies, double temperature) {
  if (train_energies.empty()) throw DomainError("Boltzmann probability needs training energies");
  if (!(temperature > 0.0)) throw DomainError("Boltzmann temperature must be > 0");
  const double beta = 1.0 / (units::kBoltzmann * temperature);
  double top = -std::numeric_limits<double>::infinity();
  for (double e : train_energies) {
    if (!std::isfinite(e)) throw NumericError("non-finite training energy");
    top = std::max(top, -beta * e);
  }
  double acc = 0.0;
  for (double e : train_energies) acc += std::exp(-beta * e - top);
  return top + std::log(acc);
}

}  // namespace

double log_boltzmann_prob(double energy, std::span<const double> train_energies,
                          double temperature) {
  if (!std::isfinite(energy)) throw NumericError("non-finite predicted energy");
  const double log_z = log_partition(train_energies, temperature);
  return -energy / (units::kBoltzmann * temperature) - log_z;
}

double boltzmann_prob(double energy, std::span<const double> train_energies, double temperature) {
  return std::exp(log_boltzmann_prob(energy, train_energies, temperature));
}

bool uses_log_u(Scheme scheme) { return scheme != Scheme::kGmm; }

ObjectiveValue evaluate_objective(const Structure& s, const ObjectiveBuilder& builder, bool log_u) {
  Tape tape;
  Var x = tape.variable(s.positions);
  const ObjectiveTerms t = builder(x, s);
  Var objective = log_u ? t.log_p + log(t.u) : t.log_p + t.u;
  ObjectiveValue v;
  v.objective = objective.scalar();
  v.log_p = t.log_p.scalar();
  v.u = t.u.scalar();
  v.energy = t.energy;
  v.gradient = tape.grad(objective, std::vector<Var>{x})[0];
  return v;
}

ObjectiveBuilder model_objective(const UqContext& ctx, std::vector<double> train_energies,
                                 double temperature) {
  ctx.validate();
  const double log_z = log_partition(train_energies, temperature);
  const double inv_kt = 1.0 / (units::kBoltzmann * temperature);
  return [ctx, log_z, inv_kt](Var positions, const Structure& current) {
    const AtomsBatch batch = make_batch(current, ctx.model->arch.descriptor);
    const UncertaintyGraph g = uncertainty_graph(positions, batch, ctx);
    ObjectiveTerms t;
    t.log_p = -inv_kt * g.energy - log_z;
    t.u = g.u;
    t.energy = g.energy.scalar();
    return t;
  };
}

AdversarialResult adversarial_ascend(const Structure& seed, const ObjectiveBuilder& builder,
                                     bool log_u, const AdversarialConfig& cfg,
                                     std::uint64_t rng_seed) {
  cfg.validate();
  seed.validate();
  Rng rng(rng_seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  AdversarialResult r;
  r.seed_id = seed.id;
  r.structure = seed;
  r.structure.id = seed.id + "-adv";
  if (cfg.init_scale > 0.0) {
    for (Eigen::Index k = 0; k < r.structure.positions.size(); ++k) {
      r.structure.positions(k) += cfg.init_scale * noise(rng);
    }
  }
  ObjectiveValue v = evaluate_objective(r.structure, builder, log_u);
  auto record = [&](const ObjectiveValue& cur) {
    r.trace.push_back(cur.objective);
    r.pu_trace.push_back(std::exp(cur.log_p) * cur.u);
  };
  record(v);
  bool any_gradient = false;
  for (int step = 0; step < cfg.steps; ++step) {
    const double norm = v.gradient.norm();
    if (!(norm > 0.0) || cfg.learning_rate == 0.0 || !std::isfinite(norm)) {
      record(v);
      continue;
    }
    any_gradient = true;
    Structure next = r.structure;
    next.positions += (cfg.learning_rate / norm) * v.gradient;
    try {
      if (!next.positions.allFinite()) throw NumericError("non-finite adversarial step");
      ObjectiveValue nv = evaluate_objective(next, builder, log_u);
      if (!std::isfinite(nv.objective)) throw NumericError("non-finite adversarial objective");
      r.structure = std::move(next);
      v = std::move(nv);
    } catch (const NumericError& e) {
      spdlog::warn("adversarial ascent from {} stopped at step {}: {}", seed.id, step, e.what());
      while (static_cast<int>(r.trace.size()) < cfg.steps + 1) record(v);
      break;
    }
    record(v);
  }
  r.stalled = !any_gradient && cfg.learning_rate > 0.0;
  r.p = std::exp(v.log_p);
  r.u = v.u;
  r.energy = v.energy;
  r.objective = v.objective;
  return r;
}

AdversarialResult adversarial_ascend(const Structure& seed, const UqContext& ctx,
                                     std::span<const double> train_energies,
                                     const AdversarialConfig& cfg, std::uint64_t rng_seed) {
  const ObjectiveBuilder b = model_objective(
      ctx, std::vector<double>(train_energies.begin(), train_energies.end()), cfg.temperature);
  return adversarial_ascend(seed, b, uses_log_u(ctx.scheme), cfg, rng_seed);
}

std::vector<AdversarialResult> adversarial_batch(const std::vector<const Structure*>& seeds,
                                                 const UqContext& ctx,
                                                 std::span<const double> train_energies,
                                                 const AdversarialConfig& cfg,
                                                 std::uint64_t rng_seed, std::size_t threads) {
  const ObjectiveBuilder b = model_objective(
      ctx, std::vector<double>(train_energies.begin(), train_energies.end()), cfg.temperature);
  std::vector<AdversarialResult> out(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t k) {
    out[k] = adversarial_ascend(*seeds[k], b, uses_log_u(ctx.scheme), cfg, derive_seed(rng_seed, {k}));
  });
  return out;
}

std::vector<std::size_t> select_batch(const std::vector<AdversarialResult>& results, std::size_t k,
                                      double dedup_threshold) {
  std::vector<std::size_t> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return results[a].objective > results[b].objective;
  });
  std::vector<std::size_t> chosen;
  for (std::size_t idx : order) {
    if (chosen.size() == k) break;
    const Structure& cand = results[idx].structure;
    if (!cand.positions.allFinite()) continue;
    bool duplicate = false;
    for (std::size_t c : chosen) {
      const Structure& kept = results[c].structure;
      if (kept.atomic_numbers == cand.atomic_numbers && rmsd(kept, cand) < dedup_threshold) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) chosen.push_back(idx);
  }
  if (chosen.size() < k) {
    spdlog::warn("select_batch: only {} of {} requested candidates survived deduplication",
                 chosen.size(), k);
  }
  return chosen;
}

nlohmann::json result_to_json(const AdversarialResult& r) {
  return {{"seed_id", r.seed_id}, {"structure", structure_to_json(r.structure)},
          {"trace", r.trace},     {"pu_trace", r.pu_trace},
          {"p", r.p},             {"u", r.u},
          {"energy", r.energy},   {"objective", r.objective},
          {"stalled", r.stalled}};
}

AdversarialResult result_from_json(const nlohmann::json& j) {
  try {
    AdversarialResult r;
    r.seed_id = j.at("seed_id").get<std::string>();
    r.structure = structure_from_json(j.at("structure"));
    r.trace = j.at("trace").get<std::vector<double>>();
    r.pu_trace = j.at("pu_trace").get<std::vector<double>>();
    r.p = j.at("p").get<double>();
    r.u = j.at("u").get<double>();
    r.energy = j.at("energy").get<double>();
    r.objective = j.at("objective").get<double>();
    r.stalled = j.at("stalled").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed adversarial result: ") + e.what());
  }
}

void write_results(const std::vector<AdversarialResult>& results, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const AdversarialResult& r : results) out << result_to_json(r).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<AdversarialResult> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<AdversarialResult> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(result_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace uqlab

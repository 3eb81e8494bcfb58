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

#include "uqlab/training/training.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "uqlab/common/encoding.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/common/parallel.hpp"
#include "uqlab/common/random.hpp"
#include "uqlab/common/units.hpp"

namespace uqlab {

using diff::Index;
using diff::Matrix;
using diff::Tape;
using diff::Var;

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kMseEf: return "mse_ef";
    case LossKind::kMveNll: return "mve_nll";
    case LossKind::kEvidential: return "evidential";
  }
  return "mse_ef";
}

LossKind loss_kind_from_string(std::string_view name) {
  if (name == "mse_ef") return LossKind::kMseEf;
  if (name == "mve_nll") return LossKind::kMveNll;
  if (name == "evidential") return LossKind::kEvidential;
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

LossKind loss_for_head(HeadType head) {
  switch (head) {
    case HeadType::kStandard: return LossKind::kMseEf;
    case HeadType::kMve: return LossKind::kMveNll;
    case HeadType::kEvidential: return LossKind::kEvidential;
  }
  return LossKind::kMseEf;
}

void LossSpec::validate() const {
  if (energy_weight < 0.0 || force_weight < 0.0 || evidential_lambda < 0.0) {
    throw ConfigError("loss weights must be non-negative");
  }
}

void LossSpec::check_head(HeadType head) const {
  if (loss_for_head(head) != kind) {
    throw ConfigError("loss '" + std::string(to_string(kind)) + "' does not match head '" +
                      std::string(to_string(head)) + "'");
  }
}

void TrainHyper::validate() const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (learning_rate < 0.0) throw ConfigError("train.learning_rate must be >= 0");
  if (batch_size < 0) throw ConfigError("train.batch_size must be >= 0");
  if (decay_every < 0 || !(decay_factor > 0.0)) throw ConfigError("invalid step decay");
  if (patience < 0) throw ConfigError("train.patience must be >= 0");
  if (!(gradient_clip > 0.0)) throw ConfigError("train.gradient_clip must be positive");
}

nlohmann::json report_to_json(const TrainReport& r) {
  return {{"member", r.member},
          {"seed", r.seed},
          {"train_loss", r.train_loss},
          {"validation_loss", r.validation_loss},
          {"best_epoch", r.best_epoch},
          {"best_loss", r.best_loss},
          {"snapshot_id", r.snapshot_id},
          {"wall_seconds", r.wall_seconds},
          {"clamp_events", r.clamp_events},
          {"peak_tape_bytes", r.peak_tape_bytes},
          {"failed", r.failed},
          {"error", r.error}};
}

Normalization fit_normalization(const std::vector<LabeledSample>& data) {
  if (data.empty()) throw DomainError("cannot fit a normalization on no data");
  double per_atom = 0.0;
  double sq = 0.0;
  double count = 0.0;
  for (const LabeledSample& s : data) {
    per_atom += s.energy / static_cast<double>(s.structure.size());
    sq += s.forces.squaredNorm();
    count += static_cast<double>(s.forces.size());
  }
  Normalization n;
  n.energy_shift = per_atom / static_cast<double>(data.size());
  n.energy_scale = std::max(std::sqrt(sq / count), 1e-3);
  return n;
}

BatchLoss batch_loss(Tape& tape, const AtomsBatch& batch,
                     const std::vector<const LabeledSample*>& samples,
                     const ModelBundle& model, const ParamVars& params,
                     const LossSpec& spec) {
  const auto n_struct = static_cast<Index>(samples.size());
  Matrix energies(n_struct, 1);
  Matrix forces(batch.n_atoms(), 3);
  for (Index s = 0; s < n_struct; ++s) {
    const LabeledSample& sample = *samples[static_cast<std::size_t>(s)];
    energies(s, 0) = sample.energy;
    forces.middleRows(batch.offsets[static_cast<std::size_t>(s)], sample.forces.rows()) =
        sample.forces;
  }
  const double inv_scale = 1.0 / model.norm.energy_scale;
  Var positions = tape.variable(batch.positions);
  const ModelGraph g = build_model_graph(positions, batch, model.arch, model.norm, params);
  const std::vector<Var> wrt{positions};
  Var predicted_forces = -tape.grad_graph(sum(g.energy), wrt)[0];

  Var force_residual = (predicted_forces - tape.constant(forces)) * inv_scale;
  Var energy_residual = (g.energy - tape.constant(energies)) * inv_scale;
  Var per_atom_energy = energy_residual * tape.constant(batch.inverse_counts);
  Var force_mse = mean(square(force_residual));
  Var energy_mse = mean(square(per_atom_energy));

  Var loss;
  switch (spec.kind) {
    case LossKind::kMseEf:
      loss = spec.energy_weight * energy_mse + spec.force_weight * force_mse;
      break;
    case LossKind::kMveNll: {
      Var variance = g.atom_variance * (inv_scale * inv_scale);  // N x 1
      Var nll = 0.5 * (log(variance) + square(force_residual) / variance +
                       std::log(2.0 * units::kPi));
      loss = spec.energy_weight * energy_mse + spec.force_weight * mean(nll);
      break;
    }
    case LossKind::kEvidential: {
      Var nu = g.nu;
      Var alpha = g.alpha;
      Var omega = 2.0 * g.beta_unit * (1.0 + nu);
      Var nll = 0.5 * (std::log(units::kPi) - log(nu)) -
                alpha * log(omega) + (alpha + 0.5) * log(nu * square(energy_residual) + omega) +
                lgamma(alpha) - lgamma(alpha + 0.5);
      Var reg = abs(energy_residual) * (2.0 * nu + alpha);
      loss = mean(nll) + spec.evidential_lambda * mean(reg) + spec.force_weight * force_mse;
      break;
    }
  }
  return {loss, predicted_forces};
}

namespace {

std::vector<std::vector<const LabeledSample*>> make_batches(
    const std::vector<LabeledSample>& data, int batch_size, Rng* shuffle) {
  std::vector<const LabeledSample*> order;
  order.reserve(data.size());
  for (const LabeledSample& s : data) order.push_back(&s);
  if (shuffle) std::shuffle(order.begin(), order.end(), *shuffle);
  const std::size_t size = batch_size > 0 ? static_cast<std::size_t>(batch_size) : order.size();
  std::vector<std::vector<const LabeledSample*>> out;
  for (std::size_t start = 0; start < order.size(); start += size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + size)));
  }
  return out;
}

struct PreparedBatch {
  std::vector<const LabeledSample*> samples;
  AtomsBatch atoms;
};

std::vector<PreparedBatch> prepare(std::vector<std::vector<const LabeledSample*>> groups,
                                   const DescriptorConfig& cfg) {
  std::vector<PreparedBatch> out;
  for (auto& g : groups) {
    std::vector<const Structure*> structures;
    for (const LabeledSample* s : g) structures.push_back(&s->structure);
    out.push_back({std::move(g), make_batch(structures, cfg)});
  }
  return out;
}

// Size-weighted mean loss over prepared batches; optionally also the gradient.
double sweep(const std::vector<PreparedBatch>& batches, const ModelBundle& model,
             const ParamVector& params, const LossSpec& spec, Eigen::VectorXd* gradient,
             std::size_t* peak_bytes) {
  double total = 0.0;
  std::size_t count = 0;
  if (gradient) gradient->setZero(params.values.size());
  for (const PreparedBatch& b : batches) {
    Tape tape;
    const ParamVars vars = bind_params(tape, params, gradient != nullptr);
    const BatchLoss bl = batch_loss(tape, b.atoms, b.samples, model, vars, spec);
    const double weight = static_cast<double>(b.samples.size());
    total += weight * bl.loss.scalar();
    count += b.samples.size();
    if (gradient) {
      *gradient += weight * flatten_gradient(params, tape.grad(bl.loss, vars.segments));
    }
    if (peak_bytes) *peak_bytes = std::max(*peak_bytes, tape.bytes());
  }
  if (gradient) *gradient /= static_cast<double>(count);
  return total / static_cast<double>(count);
}

std::string snapshot_id(const ParamVector& p) {
  return sha256_hex(encode_doubles({p.values.data(), static_cast<std::size_t>(p.values.size())}))
      .substr(0, 16);
}

}  // namespace

double evaluate_loss(const ModelBundle& model, std::size_t member,
                     const std::vector<LabeledSample>& data, const LossSpec& spec) {
  if (data.empty()) throw DomainError("cannot evaluate a loss on no data");
  const auto batches = prepare(make_batches(data, 0, nullptr), model.arch.descriptor);
  return sweep(batches, model, model.members.at(member), spec, nullptr, nullptr);
}

TrainReport train(ModelBundle& model, std::size_t member,
                  const std::vector<LabeledSample>& training,
                  const std::vector<LabeledSample>& validation, const LossSpec& spec,
                  const TrainHyper& hp, std::uint64_t seed) {
  const auto started = std::chrono::steady_clock::now();
  if (training.empty()) throw DomainError("training data is empty");
  if (member >= model.size()) throw DomainError("member index out of range");
  spec.validate();
  spec.check_head(model.arch.head);
  hp.validate();
  for (const LabeledSample& v : validation) {
    for (const LabeledSample& t : training) {
      if (!v.structure.id.empty() && v.structure.id == t.structure.id) {
        throw DomainError("sample '" + v.structure.id + "' is in both training and validation");
      }
    }
  }

  TrainReport report;
  report.member = member;
  report.seed = seed;
  ParamVector& params = model.members[member];
  ParamVector best = params;
  Rng rng(seed);
  const bool minibatch = hp.batch_size > 0 && static_cast<std::size_t>(hp.batch_size) < training.size();
  std::vector<PreparedBatch> train_batches =
      prepare(make_batches(training, 0, nullptr), model.arch.descriptor);
  const std::vector<PreparedBatch> val_batches =
      validation.empty() ? std::vector<PreparedBatch>{}
                         : prepare(make_batches(validation, 0, nullptr), model.arch.descriptor);

  const Eigen::Index dim = params.values.size();
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd m2 = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd gradient(dim);
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long adam_step = 0;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr = hp.learning_rate *
                      (hp.decay_every > 0 ? std::pow(hp.decay_factor, epoch / hp.decay_every) : 1.0);
    if (minibatch) {
      train_batches = prepare(make_batches(training, hp.batch_size, &rng), model.arch.descriptor);
    }
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    try {
      for (const PreparedBatch& b : train_batches) {
        const double loss =
            sweep({b}, model, params, spec, &gradient, &report.peak_tape_bytes);
        if (!std::isfinite(loss) || !gradient.allFinite()) {
          throw NumericError("non-finite loss or gradient at epoch " + std::to_string(epoch));
        }
        epoch_loss += loss * static_cast<double>(b.samples.size());
        seen += b.samples.size();
        const double norm = gradient.norm();
        if (norm > hp.gradient_clip) {
          gradient *= hp.gradient_clip / norm;
          ++report.clamp_events;
          spdlog::debug("member {} epoch {}: gradient norm {:.3g} clamped", member, epoch, norm);
        }
        ++adam_step;
        m1 = hp.adam_beta1 * m1 + (1.0 - hp.adam_beta1) * gradient;
        m2 = hp.adam_beta2 * m2 + (1.0 - hp.adam_beta2) * gradient.cwiseProduct(gradient);
        const double c1 = 1.0 - std::pow(hp.adam_beta1, static_cast<double>(adam_step));
        const double c2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(adam_step));
        params.values.array() -= lr * (m1.array() / c1) /
                                 ((m2.array() / c2).sqrt() + hp.adam_epsilon);
      }
      epoch_loss /= static_cast<double>(seen);
      report.train_loss.push_back(epoch_loss);
      double monitored = epoch_loss;
      if (!val_batches.empty()) {
        monitored = sweep(val_batches, model, params, spec, nullptr, &report.peak_tape_bytes);
        if (!std::isfinite(monitored)) {
          throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        report.validation_loss.push_back(monitored);
      }
      if (monitored < best_loss) {
        best_loss = monitored;
        best = params;
        report.best_epoch = epoch;
        since_best = 0;
      } else if (hp.patience > 0 && ++since_best >= hp.patience) {
        break;
      }
    } catch (const NumericError& e) {
      report.failed = true;
      report.error = e.what();
      spdlog::warn("member {}: training aborted: {}", member, e.what());
      break;
    }
  }
  if (std::isfinite(best_loss)) params = best;
  report.best_loss = best_loss;
  report.snapshot_id = snapshot_id(params);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

std::vector<TrainReport> train_ensemble(ModelBundle& model,
                                        const std::vector<LabeledSample>& training,
                                        const std::vector<LabeledSample>& validation,
                                        const LossSpec& spec, const TrainHyper& hp,
                                        std::uint64_t seed, std::size_t threads,
                                        bool shared_seed) {
  if (model.size() < 2) throw DomainError("an ensemble needs at least two members");
  std::vector<TrainReport> reports(model.size());
  parallel_for(model.size(), threads, [&](std::size_t m) {
    const std::uint64_t s = shared_seed ? seed : derive_seed(seed, {m});
    reports[m] = train(model, m, training, validation, spec, hp, s);
  });
  const auto survivors = std::count_if(reports.begin(), reports.end(),
                                       [](const TrainReport& r) { return !r.failed; });
  if (survivors < 2) {
    throw NumericError("only " + std::to_string(survivors) + " ensemble members trained successfully");
  }
  return reports;
}

}  // namespace uqlab

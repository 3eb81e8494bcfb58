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

#include "uqlab/uq/uq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "uqlab/common/error.hpp"
#include "uqlab/common/random.hpp"
#include "uqlab/common/units.hpp"

namespace uqlab {

using diff::Index;
using diff::IndexList;
using diff::Matrix;
using diff::Tape;
using diff::Var;

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::kEnsemble: return "ensemble";
    case Scheme::kMve: return "mve";
    case Scheme::kEvidential: return "evidential";
    case Scheme::kGmm: return "gmm";
  }
  return "ensemble";
}

Scheme scheme_from_string(std::string_view name) {
  if (name == "ensemble") return Scheme::kEnsemble;
  if (name == "mve") return Scheme::kMve;
  if (name == "evidential") return Scheme::kEvidential;
  if (name == "gmm") return Scheme::kGmm;
  throw ConfigError("unknown UQ scheme '" + std::string(name) + "'");
}

std::string_view to_string(Pooling pooling) {
  return pooling == Pooling::kMean ? "mean" : "max";
}

Pooling pooling_from_string(std::string_view name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "max") return Pooling::kMax;
  throw ConfigError("unknown pooling '" + std::string(name) + "'");
}

HeadType head_for_scheme(Scheme scheme) {
  switch (scheme) {
    case Scheme::kMve: return HeadType::kMve;
    case Scheme::kEvidential: return HeadType::kEvidential;
    default: return HeadType::kStandard;
  }
}

EnsembleVariance ensemble_uncertainty(const std::vector<PotentialOutput>& outputs) {
  const std::size_t m = outputs.size();
  if (m < 2) throw DomainError("ensemble uncertainty needs at least two members");
  double mean_e = 0.0;
  Eigen::MatrixXd mean_f = Eigen::MatrixXd::Zero(outputs[0].forces.rows(), 3);
  for (const PotentialOutput& o : outputs) {
    if (o.forces.rows() != mean_f.rows()) throw DomainError("member outputs disagree in size");
    mean_e += o.energy;
    mean_f += o.forces;
  }
  mean_e /= static_cast<double>(m);
  mean_f /= static_cast<double>(m);
  EnsembleVariance v;
  const double components = static_cast<double>(mean_f.size());
  for (const PotentialOutput& o : outputs) {
    v.energy += (o.energy - mean_e) * (o.energy - mean_e);
    v.forces += (o.forces - mean_f).squaredNorm() / components;
  }
  v.energy /= static_cast<double>(m - 1);
  v.forces /= static_cast<double>(m - 1);
  return v;
}

double mve_uncertainty(const PotentialOutput& output) {
  if (output.head != HeadType::kMve) throw DomainError("MVE uncertainty needs an MVE head");
  if (output.atom_variance.empty()) throw DomainError("MVE output has no variances");
  double s = 0.0;
  for (double v : output.atom_variance) s += v;
  return s / static_cast<double>(output.atom_variance.size());
}

EvidentialUncertainty evidential_uncertainty(double nu, double alpha, double beta) {
  if (!(alpha > 1.0)) throw DomainError("evidential uncertainty needs alpha > 1");
  if (!(nu > 0.0) || !(beta > 0.0)) throw DomainError("evidential uncertainty needs nu, beta > 0");
  return {beta / (alpha - 1.0), beta / (nu * (alpha - 1.0))};
}

EvidentialUncertainty evidential_uncertainty(const PotentialOutput& output) {
  if (output.head != HeadType::kEvidential || !output.evidential) {
    throw DomainError("evidential uncertainty needs an evidential head");
  }
  const EvidentialParams& p = *output.evidential;
  return evidential_uncertainty(p.nu, p.alpha, p.beta);
}

Eigen::VectorXd gmm_atom_nll(const GmmModel& gmm, const Eigen::MatrixXd& latent) {
  return -gmm.log_density(latent);
}

double gmm_uncertainty(const GmmModel& gmm, const PotentialOutput& output, Pooling pooling) {
  const Eigen::VectorXd nll = gmm_atom_nll(gmm, output.latent);
  return pooling == Pooling::kMean ? nll.mean() : nll.maxCoeff();
}

void UqContext::validate() const {
  if (!model) throw DomainError("UQ context has no model");
  if (model->arch.head != head_for_scheme(scheme)) {
    throw DomainError("scheme '" + std::string(to_string(scheme)) + "' does not match head '" +
                      std::string(to_string(model->arch.head)) + "'");
  }
  if (scheme == Scheme::kEnsemble && model->size() < 2) {
    throw DomainError("ensemble scheme needs at least two members");
  }
  if (scheme != Scheme::kEnsemble && member >= model->size()) {
    throw DomainError("member index out of range");
  }
  if (scheme == Scheme::kGmm) {
    if (!gmm) throw DomainError("GMM scheme needs a fitted mixture");
    if (gmm->d != model->arch.latent_dim) {
      throw DomainError("GMM dimension " + std::to_string(gmm->d) +
                        " does not match latent width " + std::to_string(model->arch.latent_dim));
    }
  }
}

std::vector<UncertaintyRecord> evaluate_uncertainty(const std::vector<const Structure*>& structures,
                                                    const UqContext& ctx) {
  ctx.validate();
  std::vector<UncertaintyRecord> out(structures.size());
  if (structures.empty()) return out;
  if (ctx.scheme == Scheme::kEnsemble) {
    std::vector<std::vector<PotentialOutput>> per_member;
    for (std::size_t m = 0; m < ctx.model->size(); ++m) {
      per_member.push_back(predict_batch(structures, *ctx.model, m));
    }
    for (std::size_t s = 0; s < structures.size(); ++s) {
      std::vector<PotentialOutput> outs;
      for (auto& pm : per_member) outs.push_back(pm[s]);
      const EnsembleVariance v = ensemble_uncertainty(outs);
      UncertaintyRecord& r = out[s];
      r.structure_id = structures[s]->id;
      r.scheme = ctx.scheme;
      r.u = v.forces;
      r.aux1 = v.energy;
      r.forces = Eigen::MatrixXd::Zero(outs[0].forces.rows(), 3);
      for (const PotentialOutput& o : outs) {
        r.energy += o.energy;
        r.forces += o.forces;
      }
      r.energy /= static_cast<double>(outs.size());
      r.forces /= static_cast<double>(outs.size());
    }
    return out;
  }
  const std::vector<PotentialOutput> outs = predict_batch(structures, *ctx.model, ctx.member);
  for (std::size_t s = 0; s < structures.size(); ++s) {
    UncertaintyRecord& r = out[s];
    const PotentialOutput& o = outs[s];
    r.structure_id = o.structure_id;
    r.scheme = ctx.scheme;
    r.energy = o.energy;
    r.forces = o.forces;
    switch (ctx.scheme) {
      case Scheme::kMve:
        r.u = mve_uncertainty(o);
        break;
      case Scheme::kEvidential: {
        const EvidentialUncertainty e = evidential_uncertainty(o);
        r.u = e.epistemic;
        r.aux1 = e.aleatoric;
        break;
      }
      case Scheme::kGmm:
        r.u = gmm_uncertainty(*ctx.gmm, o, ctx.pooling);
        break;
      case Scheme::kEnsemble:
        break;
    }
  }
  return out;
}

Var gmm_nll_graph(Var latent, const GmmModel& gmm) {
  Tape& tape = *latent.tape();
  if (latent.cols() != gmm.d) throw DomainError("latent width does not match the GMM dimension");
  std::vector<Var> comps;
  for (int c = 0; c < gmm.k; ++c) {
    const Eigen::MatrixXd& l = gmm.cholesky[static_cast<std::size_t>(c)];
    const Eigen::MatrixXd linv_t =
        l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(gmm.d, gmm.d)).transpose();
    Var centred = latent - tape.constant(Matrix(gmm.means.row(c)));
    Var z = matmul(centred, tape.constant(linv_t));
    comps.push_back(-0.5 * sum_cols(square(z)) + gmm.log_norm[static_cast<std::size_t>(c)]);
  }
  Var a = concat_cols(comps);  // N x K
  // The shift only stabilizes the exponentials; its gradient contribution cancels.
  const Matrix shift = a.value().rowwise().maxCoeff();
  Var shifted = a - tape.constant(shift);
  Var lse = log(sum_cols(exp(shifted))) + tape.constant(shift);
  return -lse;
}

namespace {

Var pool(Var per_atom, const AtomsBatch& batch, Pooling pooling) {
  Tape& tape = *per_atom.tape();
  if (pooling == Pooling::kMean) {
    return scatter_add_rows(per_atom, batch.atom_structure, batch.n_structures) *
           tape.constant(batch.inverse_counts);
  }
  auto index = std::make_shared<IndexList>();
  const Matrix& v = per_atom.value();
  for (Index s = 0; s < batch.n_structures; ++s) {
    const Index off = batch.offsets[static_cast<std::size_t>(s)];
    const Index n = batch.offsets[static_cast<std::size_t>(s) + 1] - off;
    Index best = 0;
    v.col(0).segment(off, n).maxCoeff(&best);
    index->push_back(off + best);
  }
  return gather_rows(per_atom, index);
}

}  // namespace

UncertaintyGraph uncertainty_graph(Var positions, const AtomsBatch& batch, const UqContext& ctx) {
  ctx.validate();
  Tape& tape = *positions.tape();
  const ModelBundle& model = *ctx.model;
  UncertaintyGraph out;
  if (ctx.scheme == Scheme::kEnsemble) {
    const std::vector<Var> wrt{positions};
    std::vector<Var> energies;
    std::vector<Var> forces;
    for (std::size_t m = 0; m < model.size(); ++m) {
      const ParamVars params = bind_params(tape, model.members[m], false);
      const ModelGraph g = build_model_graph(positions, batch, model.arch, model.norm, params);
      energies.push_back(g.energy);
      forces.push_back(-tape.grad_graph(sum(g.energy), wrt)[0]);
    }
    const double inv_m = 1.0 / static_cast<double>(model.size());
    Var mean_e = energies[0];
    Var mean_f = forces[0];
    for (std::size_t m = 1; m < model.size(); ++m) {
      mean_e = mean_e + energies[m];
      mean_f = mean_f + forces[m];
    }
    mean_e = mean_e * inv_m;
    mean_f = mean_f * inv_m;
    Var dev = sum_cols(square(forces[0] - mean_f));
    for (std::size_t m = 1; m < model.size(); ++m) dev = dev + sum_cols(square(forces[m] - mean_f));
    Var per_structure = scatter_add_rows(dev, batch.atom_structure, batch.n_structures) *
                        tape.constant(batch.inverse_counts);
    out.u = per_structure * (1.0 / (3.0 * static_cast<double>(model.size() - 1)));
    out.energy = mean_e;
    return out;
  }
  const ParamVars params = bind_params(tape, model.members[ctx.member], false);
  const ModelGraph g = build_model_graph(positions, batch, model.arch, model.norm, params);
  out.energy = g.energy;
  switch (ctx.scheme) {
    case Scheme::kMve:
      out.u = pool(g.atom_variance, batch, Pooling::kMean);
      break;
    case Scheme::kEvidential:
      out.u = g.beta / (g.nu * (g.alpha - 1.0));
      break;
    case Scheme::kGmm:
      out.u = pool(gmm_nll_graph(g.latent, *ctx.gmm), batch, ctx.pooling);
      break;
    case Scheme::kEnsemble:
      break;
  }
  return out;
}

Selection fit_latent_gmm(const ModelBundle& model, std::size_t member,
                         const std::vector<const Structure*>& structures,
                         const std::vector<int>& candidates, std::uint64_t seed,
                         std::size_t max_points, const EmOptions& opts) {
  if (structures.empty()) throw DomainError("no structures to fit the latent GMM on");
  const std::vector<PotentialOutput> outs = predict_batch(structures, model, member);
  Index rows = 0;
  for (const PotentialOutput& o : outs) rows += o.latent.rows();
  Eigen::MatrixXd all(rows, model.arch.latent_dim);
  Index r = 0;
  for (const PotentialOutput& o : outs) {
    all.middleRows(r, o.latent.rows()) = o.latent;
    r += o.latent.rows();
  }
  if (static_cast<std::size_t>(rows) > max_points) {
    std::vector<Index> idx(static_cast<std::size_t>(rows));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, {0x73756273}));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
    Eigen::MatrixXd sub(static_cast<Index>(max_points), all.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) sub.row(static_cast<Index>(i)) = all.row(idx[i]);
    all = std::move(sub);
  }
  std::vector<int> usable;
  for (int k : candidates) {
    if (k >= 1 && k <= all.rows()) usable.push_back(k);
  }
  if (usable.empty()) throw DomainError("no GMM candidate K fits the number of latent points");
  return select_k(all, usable, seed, opts);
}

void write_uncertainty_csv(const std::vector<UncertaintyRecord>& records,
                           const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "structure_id,scheme,U,aux1,aux2\n";
  for (const UncertaintyRecord& r : records) {
    out << r.structure_id << ',' << to_string(r.scheme) << ',' << r.u << ',' << r.aux1 << ','
        << r.aux2 << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<UncertaintyRecord> read_uncertainty_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("structure_id,scheme,U", 0) != 0) {
    throw IoError(path.string() + ": missing uncertainty CSV header");
  }
  std::vector<UncertaintyRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, scheme, u, a1, a2;
    if (!std::getline(ss, id, ',') || !std::getline(ss, scheme, ',') || !std::getline(ss, u, ',') ||
        !std::getline(ss, a1, ',') || !std::getline(ss, a2, ',')) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
    }
    UncertaintyRecord r;
    r.structure_id = id;
    try {
      r.scheme = scheme_from_string(scheme);
      r.u = std::stod(u);
      r.aux1 = std::stod(a1);
      r.aux2 = std::stod(a2);
    } catch (const std::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace uqlab

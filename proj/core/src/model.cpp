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

#include "uqlab/potential/model.hpp"

#include <cmath>
#include <random>

#include "uqlab/common/error.hpp"
#include "uqlab/common/random.hpp"

namespace uqlab {

using diff::Index;
using diff::Matrix;
using diff::Var;

std::string_view to_string(HeadType head) {
  switch (head) {
    case HeadType::kStandard: return "standard";
    case HeadType::kMve: return "mve";
    case HeadType::kEvidential: return "evidential";
  }
  return "standard";
}

HeadType head_from_string(std::string_view name) {
  if (name == "standard") return HeadType::kStandard;
  if (name == "mve") return HeadType::kMve;
  if (name == "evidential") return HeadType::kEvidential;
  throw ConfigError("unknown head type '" + std::string(name) + "'");
}

std::string_view to_string(Activation act) {
  return act == Activation::kTanh ? "tanh" : "silu";
}

Activation activation_from_string(std::string_view name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "silu") return Activation::kSilu;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

void Architecture::validate() const {
  descriptor.validate();
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("hidden layer widths must be >= 1");
  }
}

std::vector<Segment> parameter_layout(const Architecture& arch) {
  std::vector<Segment> layout;
  Index offset = 0;
  auto add = [&](std::string name, Index rows, Index cols) {
    layout.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  Index in = arch.descriptor.feature_width();
  for (std::size_t k = 0; k < arch.hidden.size(); ++k) {
    const Index out = arch.hidden[k];
    add("hidden" + std::to_string(k) + ".weight", in, out);
    add("hidden" + std::to_string(k) + ".bias", 1, out);
    in = out;
  }
  add("latent.weight", in, arch.latent_dim);
  add("latent.bias", 1, arch.latent_dim);
  add("energy.weight", arch.latent_dim, 1);
  add("energy.bias", 1, 1);
  if (arch.head == HeadType::kMve) {
    add("variance.weight", arch.latent_dim, 1);
    add("variance.bias", 1, 1);
  } else if (arch.head == HeadType::kEvidential) {
    add("evidential.weight", arch.latent_dim, 3);
    add("evidential.bias", 1, 3);
  }
  return layout;
}

void ParamVector::validate() const {
  if (!values.allFinite()) throw NumericError("non-finite model parameter");
  Index expected = 0;
  for (const Segment& s : layout) {
    if (s.offset != expected || s.rows < 1 || s.cols < 1) {
      throw DomainError("parameter layout is not contiguous at '" + s.name + "'");
    }
    expected += s.size();
  }
  if (expected != values.size()) {
    throw DomainError("parameter layout does not cover the vector");
  }
}

const Segment& ParamVector::segment(std::string_view name) const {
  for (const Segment& s : layout) {
    if (s.name == name) return s;
  }
  throw DomainError("no parameter segment '" + std::string(name) + "'");
}

Matrix ParamVector::matrix(const Segment& seg) const {
  return Eigen::Map<const Matrix>(values.data() + seg.offset, seg.rows, seg.cols);
}

ParamVector init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  ParamVector p;
  p.layout = parameter_layout(arch);
  const Segment& last = p.layout.back();
  p.values.resize(last.offset + last.size());
  Rng rng(seed);
  for (const Segment& s : p.layout) {
    // Biases share the fan-in of the weight matrix that precedes them.
    const bool is_bias = s.rows == 1 && s.name.ends_with(".bias");
    const Index fan_in = is_bias ? p.layout[&s - p.layout.data() - 1].rows : s.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index k = 0; k < s.size(); ++k) p.values(s.offset + k) = u(rng);
  }
  return p;
}

void ModelBundle::validate() const {
  arch.validate();
  if (members.empty()) throw DomainError("model bundle has no members");
  const std::vector<Segment> layout = parameter_layout(arch);
  for (const ParamVector& m : members) {
    m.validate();
    if (m.layout.size() != layout.size()) {
      throw DomainError("ensemble members do not share the architecture");
    }
    for (std::size_t k = 0; k < layout.size(); ++k) {
      if (m.layout[k].name != layout[k].name || m.layout[k].rows != layout[k].rows ||
          m.layout[k].cols != layout[k].cols) {
        throw DomainError("ensemble members do not share the architecture");
      }
    }
  }
  if (!(norm.energy_scale > 0.0) || !std::isfinite(norm.energy_shift)) {
    throw DomainError("invalid energy normalization");
  }
}

ModelBundle make_bundle(const Architecture& arch, std::size_t members,
                        std::uint64_t seed) {
  if (members < 1) throw ConfigError("a model needs at least one member");
  ModelBundle b;
  b.arch = arch;
  for (std::size_t m = 0; m < members; ++m) {
    b.members.push_back(init_params(arch, derive_seed(seed, {0x6d656d62ULL, m})));
  }
  return b;
}

ParamVars bind_params(diff::Tape& tape, const ParamVector& params,
                      bool trainable) {
  ParamVars v;
  v.segments.reserve(params.layout.size());
  for (const Segment& s : params.layout) {
    Matrix m = params.matrix(s);
    v.segments.push_back(trainable ? tape.variable(std::move(m))
                                   : tape.constant(std::move(m)));
  }
  return v;
}

Eigen::VectorXd flatten_gradient(const ParamVector& params,
                                 const std::vector<Matrix>& grads) {
  Eigen::VectorXd g(params.values.size());
  for (std::size_t k = 0; k < params.layout.size(); ++k) {
    const Segment& s = params.layout[k];
    g.segment(s.offset, s.size()) =
        Eigen::Map<const Eigen::VectorXd>(grads[k].data(), s.size());
  }
  return g;
}

namespace {

// Keeps softplus outputs strictly positive when softplus underflows to 0.
constexpr double kPositiveFloor = 1e-9;

Var activate(Var x, Activation act) {
  return act == Activation::kTanh ? tanh(x) : x * sigmoid(x);
}

}  // namespace

ModelGraph build_model_graph(Var positions, const AtomsBatch& batch,
                             const Architecture& arch,
                             const Normalization& norm,
                             const ParamVars& params) {
  diff::Tape& tape = *positions.tape();
  const auto& seg = params.segments;
  std::size_t k = 0;
  Var h = featurize(positions, batch, arch.descriptor);
  for (std::size_t layer = 0; layer < arch.hidden.size(); ++layer) {
    h = activate(matmul(h, seg[k]) + seg[k + 1], arch.activation);
    k += 2;
  }
  ModelGraph g;
  g.latent = activate(matmul(h, seg[k]) + seg[k + 1], arch.activation);
  k += 2;
  Var atom_energy = matmul(g.latent, seg[k]) + seg[k + 1];
  k += 2;
  Var summed = scatter_add_rows(atom_energy, batch.atom_structure,
                                batch.n_structures);
  g.energy = norm.energy_scale * summed +
             tape.constant(norm.energy_shift * batch.atom_counts);

  const double scale2 = norm.energy_scale * norm.energy_scale;
  if (arch.head == HeadType::kMve) {
    g.atom_variance =
        scale2 * (softplus(matmul(g.latent, seg[k]) + seg[k + 1]) + kPositiveFloor);
  } else if (arch.head == HeadType::kEvidential) {
    Var raw = matmul(g.latent, seg[k]) + seg[k + 1];  // N x 3
    Var pooled = scatter_add_rows(raw, batch.atom_structure, batch.n_structures) *
                 tape.constant(batch.inverse_counts);
    Var positive = softplus(pooled) + kPositiveFloor;
    g.nu = slice_cols(positive, 0, 1);
    g.alpha = slice_cols(positive, 1, 1) + 1.0;
    g.beta_unit = slice_cols(positive, 2, 1);
    g.beta = scale2 * g.beta_unit;
  }
  return g;
}

std::vector<PotentialOutput> predict_batch(
    const std::vector<const Structure*>& structures, const ModelBundle& model,
    std::size_t member) {
  if (member >= model.size()) {
    throw DomainError("member index " + std::to_string(member) +
                      " out of range for a bundle of " +
                      std::to_string(model.size()));
  }
  std::vector<PotentialOutput> out;
  if (structures.empty()) return out;
  const AtomsBatch batch = make_batch(structures, model.arch.descriptor);
  diff::Tape tape;
  Var positions = tape.variable(batch.positions);
  try {
    const ParamVars params = bind_params(tape, model.members[member], false);
    const ModelGraph g =
        build_model_graph(positions, batch, model.arch, model.norm, params);
    const std::vector<Var> wrt{positions};
    const Matrix forces = -tape.grad(sum(g.energy), wrt)[0];

    out.resize(structures.size());
    for (std::size_t s = 0; s < structures.size(); ++s) {
      PotentialOutput& o = out[s];
      const Index off = batch.offsets[s];
      const Index n = batch.offsets[s + 1] - off;
      o.structure_id = structures[s]->id;
      o.head = model.arch.head;
      o.energy = g.energy.value()(static_cast<Index>(s), 0);
      o.forces = forces.middleRows(off, n);
      o.latent = g.latent.value().middleRows(off, n);
      if (model.arch.head == HeadType::kMve) {
        const Matrix& v = g.atom_variance.value();
        o.atom_variance.assign(v.data() + off, v.data() + off + n);
      } else if (model.arch.head == HeadType::kEvidential) {
        const auto i = static_cast<Index>(s);
        o.evidential = EvidentialParams{o.energy, g.nu.value()(i, 0),
                                        g.alpha.value()(i, 0),
                                        g.beta.value()(i, 0)};
      }
    }
  } catch (const NumericError& e) {
    std::string ids;
    for (const Structure* s : structures) ids += (ids.empty() ? "" : ",") + s->id;
    throw NumericError("prediction failed for structure(s) [" + ids + "]: " + e.what());
  }
  return out;
}

PotentialOutput predict(const Structure& s, const ModelBundle& model,
                        std::size_t member) {
  return predict_batch({&s}, model, member).front();
}

}  // namespace uqlab

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

#include "uqlab/potential/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uqlab/common/error.hpp"
#include "uqlab/common/units.hpp"

namespace uqlab {

using diff::Index;
using diff::IndexList;
using diff::Matrix;
using diff::Var;

void DescriptorConfig::validate() const {
  if (!(cutoff > 0.0)) throw ConfigError("descriptor cutoff must be > 0");
  if (n_basis < 1) throw ConfigError("descriptor needs at least one basis function");
  if (!(r_min >= 0.0) || r_min >= cutoff) {
    throw ConfigError("descriptor r_min must lie in [0, cutoff)");
  }
  if (width < 0.0) throw ConfigError("descriptor width must be >= 0");
  if (species.empty()) throw ConfigError("descriptor species registry is empty");
  for (int z : angular_zetas) {
    if (z < 1) throw ConfigError("angular zetas must be positive integers");
  }
  if (!(angular_eta >= 0.0)) throw ConfigError("angular eta must be >= 0");
}

Index DescriptorConfig::angular_channels() const {
  const auto s = static_cast<Index>(species.size());
  return s * (s + 1) / 2;
}

Index DescriptorConfig::feature_width() const {
  const auto s = static_cast<Index>(species.size());
  return s * n_basis + angular_channels() * 2 * static_cast<Index>(angular_zetas.size()) + s;
}

namespace {

Index pair_channel(int a, int b, Index n_species) {
  if (a > b) std::swap(a, b);
  // Row-major index into the upper triangle including the diagonal.
  return a * n_species - a * (a - 1) / 2 + (b - a);
}

}  // namespace

int DescriptorConfig::species_index(int atomic_number) const {
  auto it = std::find(species.begin(), species.end(), atomic_number);
  if (it == species.end()) {
    throw DomainError("atomic number " + std::to_string(atomic_number) +
                      " is not in the species registry");
  }
  return static_cast<int>(it - species.begin());
}

double DescriptorConfig::basis_width() const {
  if (width > 0.0) return width;
  if (n_basis == 1) return cutoff - r_min;
  return (cutoff - r_min) / (n_basis - 1);
}

std::vector<double> DescriptorConfig::centres() const {
  std::vector<double> c(static_cast<std::size_t>(n_basis));
  for (int k = 0; k < n_basis; ++k) {
    c[static_cast<std::size_t>(k)] =
        n_basis == 1 ? r_min
                     : r_min + (cutoff - r_min) * k / static_cast<double>(n_basis - 1);
  }
  return c;
}

AtomsBatch make_batch(const std::vector<const Structure*>& structures,
                      const DescriptorConfig& cfg) {
  cfg.validate();
  AtomsBatch b;
  b.n_structures = static_cast<Index>(structures.size());
  Index n_atoms = 0;
  b.offsets.reserve(structures.size() + 1);
  for (const Structure* s : structures) {
    s->validate();
    b.offsets.push_back(n_atoms);
    n_atoms += static_cast<Index>(s->size());
  }
  b.offsets.push_back(n_atoms);

  const auto n_species = static_cast<Index>(cfg.species.size());
  b.positions.resize(n_atoms, 3);
  b.self_species = Matrix::Zero(n_atoms, n_species);
  b.inverse_counts.resize(b.n_structures, 1);
  b.atom_counts.resize(b.n_structures, 1);
  auto atom_structure = std::make_shared<IndexList>(n_atoms);
  auto first = std::make_shared<IndexList>();
  auto second = std::make_shared<IndexList>();
  std::vector<Eigen::RowVector3d> shifts;
  std::vector<int> neighbour_species;
  auto t_first = std::make_shared<IndexList>();
  auto t_second = std::make_shared<IndexList>();
  auto t_centre = std::make_shared<IndexList>();
  std::vector<Index> t_channel;
  const bool angular = !cfg.angular_zetas.empty();

  const double rc2 = cfg.cutoff * cfg.cutoff;
  for (Index si = 0; si < b.n_structures; ++si) {
    const Structure& s = *structures[static_cast<std::size_t>(si)];
    const Index off = b.offsets[static_cast<std::size_t>(si)];
    const auto n = static_cast<Index>(s.size());
    b.atom_counts(si, 0) = static_cast<double>(n);
    b.inverse_counts(si, 0) = 1.0 / static_cast<double>(n);
    std::vector<int> sp(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      b.positions.row(off + i) = s.positions.row(i);
      (*atom_structure)[static_cast<std::size_t>(off + i)] = si;
      sp[static_cast<std::size_t>(i)] =
          cfg.species_index(s.atomic_numbers[static_cast<std::size_t>(i)]);
      b.self_species(off + i, sp[static_cast<std::size_t>(i)]) = 1.0;
    }
    for (Index i = 0; i < n; ++i) {
      const auto start = static_cast<Index>(first->size());
      for (Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const Eigen::RowVector3d d = displacement(s, i, j);
        if (d.squaredNorm() >= rc2) continue;
        first->push_back(off + i);
        second->push_back(off + j);
        shifts.push_back(d - (s.positions.row(j) - s.positions.row(i)));
        neighbour_species.push_back(sp[static_cast<std::size_t>(j)]);
      }
      if (!angular) continue;
      const auto stop = static_cast<Index>(first->size());
      for (Index p = start; p < stop; ++p) {
        for (Index q = p + 1; q < stop; ++q) {
          t_first->push_back(p);
          t_second->push_back(q);
          t_centre->push_back(off + i);
          t_channel.push_back(pair_channel(neighbour_species[static_cast<std::size_t>(p)],
                                           neighbour_species[static_cast<std::size_t>(q)],
                                           n_species));
        }
      }
    }
  }
  const auto n_pairs = static_cast<Index>(first->size());
  b.pair_shift.resize(n_pairs, 3);
  b.pair_species = Matrix::Zero(n_pairs, n_species);
  for (Index p = 0; p < n_pairs; ++p) {
    b.pair_shift.row(p) = shifts[static_cast<std::size_t>(p)];
    b.pair_species(p, neighbour_species[static_cast<std::size_t>(p)]) = 1.0;
  }
  b.triplet_channel = Matrix::Zero(static_cast<Index>(t_channel.size()), cfg.angular_channels());
  for (std::size_t t = 0; t < t_channel.size(); ++t) {
    b.triplet_channel(static_cast<Index>(t), t_channel[t]) = 1.0;
  }
  b.triplet_first = std::move(t_first);
  b.triplet_second = std::move(t_second);
  b.triplet_centre = std::move(t_centre);
  b.atom_structure = std::move(atom_structure);
  b.pair_first = std::move(first);
  b.pair_second = std::move(second);
  return b;
}

AtomsBatch make_batch(const Structure& s, const DescriptorConfig& cfg) {
  return make_batch(std::vector<const Structure*>{&s}, cfg);
}

Var featurize(Var positions, const AtomsBatch& batch,
              const DescriptorConfig& cfg) {
  diff::Tape& tape = *positions.tape();
  const Index n_atoms = batch.n_atoms();
  const auto n_species = static_cast<Index>(cfg.species.size());
  const Index radial_width = n_species * cfg.n_basis;
  const auto n_angular = static_cast<Index>(2 * cfg.angular_zetas.size());
  const Index angular_width = cfg.angular_channels() * n_angular;
  Var self = tape.constant(batch.self_species);
  if (batch.n_pairs() == 0) {
    return concat_cols(tape.constant(Matrix::Zero(n_atoms, radial_width + angular_width)), self);
  }

  Var ri = gather_rows(positions, batch.pair_first);
  Var rj = gather_rows(positions, batch.pair_second);
  Var d = rj - ri + tape.constant(batch.pair_shift);
  Var r = sqrt(sum_cols(square(d)));  // P x 1

  const std::vector<double> c = cfg.centres();
  Matrix centres(1, cfg.n_basis);
  for (int k = 0; k < cfg.n_basis; ++k) centres(0, k) = c[static_cast<std::size_t>(k)];
  const double inv_width = 1.0 / cfg.basis_width();
  Var scaled = (r - tape.constant(centres)) * inv_width;  // P x K
  Var basis = exp(-square(scaled));
  Var fcut = 0.5 * (cos((units::kPi / cfg.cutoff) * r) + 1.0);  // P x 1
  Var weighted = basis * fcut;

  std::vector<Var> blocks;
  blocks.reserve(static_cast<std::size_t>(n_species));
  for (Index s = 0; s < n_species; ++s) {
    blocks.push_back(weighted * tape.constant(batch.pair_species.col(s)));
  }
  Var per_pair = concat_cols(blocks);  // P x (S*K)
  Var radial = scatter_add_rows(per_pair, batch.pair_first, n_atoms);
  if (angular_width == 0) return concat_cols(radial, self);
  if (batch.n_triplets() == 0) {
    return concat_cols(std::vector<Var>{radial, tape.constant(Matrix::Zero(n_atoms, angular_width)), self});
  }

  Var dp = gather_rows(d, batch.triplet_first);
  Var dq = gather_rows(d, batch.triplet_second);
  Var rp = gather_rows(r, batch.triplet_first);
  Var rq = gather_rows(r, batch.triplet_second);
  Var cosine = sum_cols(dp * dq) / (rp * rq);  // T x 1
  Var envelope = exp(-cfg.angular_eta * (square(rp) + square(rq))) *
                 gather_rows(fcut, batch.triplet_first) *
                 gather_rows(fcut, batch.triplet_second);
  std::vector<Var> terms;
  for (double lambda : {1.0, -1.0}) {
    Var base = 0.5 * (1.0 + lambda * cosine);  // 2^(1-zeta)(1+l cos)^zeta = 2 base^zeta
    for (int zeta : cfg.angular_zetas) {
      Var power = base;
      for (int k = 1; k < zeta; ++k) power = power * base;
      terms.push_back(2.0 * power * envelope);
    }
  }
  Var per_triplet = concat_cols(terms);  // T x (2 |zetas|)
  std::vector<Var> channel_blocks;
  for (Index c = 0; c < cfg.angular_channels(); ++c) {
    channel_blocks.push_back(per_triplet * tape.constant(batch.triplet_channel.col(c)));
  }
  Var angular = scatter_add_rows(concat_cols(channel_blocks), batch.triplet_centre, n_atoms);
  return concat_cols(std::vector<Var>{radial, angular, self});
}

Matrix featurize(const Structure& s, const DescriptorConfig& cfg) {
  s.validate();
  diff::Tape tape;
  const AtomsBatch batch = make_batch(s, cfg);
  return featurize(tape.constant(batch.positions), batch, cfg).value();
}

}  // namespace uqlab

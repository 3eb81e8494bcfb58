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

#include <memory>
#include <vector>

#include "uqlab/diffcore/tape.hpp"
#include "uqlab/potential/structure.hpp"

namespace uqlab {

// Per-atom features in three blocks:
//   radial:  Gaussians on pair distances times a cosine cutoff, one block of
//            n_basis channels per neighbour species;
//   angular: 2^(1-zeta) (1 +- cos theta_ijk)^zeta exp(-eta (r_ij^2 + r_ik^2))
//            fc(r_ij) fc(r_ik), one block per unordered neighbour species pair;
//   self:    one-hot of the atom's own species.
// Feature width = S * n_basis + S (S + 1) / 2 * 2 * |zetas| + S.
struct DescriptorConfig {
  double cutoff = 4.0;     // Angstrom
  int n_basis = 8;
  double r_min = 0.5;      // first basis centre, Angstrom
  double width = 0.0;      // Gaussian width; 0 = centre spacing
  std::vector<int> angular_zetas{1, 2, 4};  // empty = radial only
  double angular_eta = 0.1;                 // 1/Angstrom^2
  std::vector<int> species;

  void validate() const;
  diff::Index feature_width() const;
  diff::Index angular_channels() const;  // unordered species pairs
  int species_index(int atomic_number) const;  // throws if unknown
  double basis_width() const;
  std::vector<double> centres() const;
};

// Several structures flattened into one set of rows, plus the neighbour list
// evaluated at the current positions.
struct AtomsBatch {
  diff::Matrix positions;  // N x 3
  std::shared_ptr<const diff::IndexList> atom_structure;
  std::shared_ptr<const diff::IndexList> pair_first;
  std::shared_ptr<const diff::IndexList> pair_second;
  diff::Matrix pair_shift;        // P x 3, periodic image shifts
  diff::Matrix pair_species;      // P x S, one-hot of the neighbour species
  diff::Matrix self_species;      // N x S
  std::shared_ptr<const diff::IndexList> triplet_first;   // pair index i->j
  std::shared_ptr<const diff::IndexList> triplet_second;  // pair index i->k
  std::shared_ptr<const diff::IndexList> triplet_centre;  // atom i
  diff::Matrix triplet_channel;   // T x C, one-hot of the (j, k) species pair
  diff::Matrix inverse_counts;    // S_struct x 1, 1 / atoms per structure
  diff::Matrix atom_counts;       // S_struct x 1
  std::vector<diff::Index> offsets;  // first atom row of every structure
  diff::Index n_structures = 0;

  diff::Index n_atoms() const { return positions.rows(); }
  diff::Index n_pairs() const {
    return static_cast<diff::Index>(pair_first->size());
  }
  diff::Index n_triplets() const {
    return static_cast<diff::Index>(triplet_first->size());
  }
};

AtomsBatch make_batch(const std::vector<const Structure*>& structures,
                      const DescriptorConfig& cfg);
AtomsBatch make_batch(const Structure& s, const DescriptorConfig& cfg);

// Per-atom features as a differentiable function of `positions` (N x 3,
// laid out as in `batch`).
diff::Var featurize(diff::Var positions, const AtomsBatch& batch,
                    const DescriptorConfig& cfg);

// Plain n x B feature matrix of one structure.
diff::Matrix featurize(const Structure& s, const DescriptorConfig& cfg);

}  // namespace uqlab

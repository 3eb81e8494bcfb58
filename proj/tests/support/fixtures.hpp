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

#include <random>
#include <vector>

#include "uqlab/potential/model.hpp"

namespace uqlab::testing {

// Triatomic with harmonic springs (rest length 1.1, k = 20) between all pairs.
inline LabeledSample spring_sample(std::mt19937_64& rng, double jitter, int index) {
  std::normal_distribution<double> n(0.0, jitter);
  LabeledSample s;
  s.structure.id = "spring-" + std::to_string(index);
  s.structure.atomic_numbers = {1, 1, 8};
  s.structure.positions.resize(3, 3);
  s.structure.positions << 0.0, 0.0, 0.0, 1.1, 0.0, 0.0, 0.55, 0.95, 0.0;
  for (Eigen::Index i = 0; i < 9; ++i) s.structure.positions(i) += n(rng);
  s.forces = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      const Eigen::RowVector3d d = s.structure.positions.row(j) - s.structure.positions.row(i);
      const double r = d.norm();
      s.energy += 10.0 * (r - 1.1) * (r - 1.1);
      const Eigen::RowVector3d f = -20.0 * (r - 1.1) / r * d;
      s.forces.row(j) += f;
      s.forces.row(i) -= f;
    }
  }
  s.provenance = "fixture";
  return s;
}

inline std::vector<LabeledSample> spring_data(std::size_t n, std::uint64_t seed,
                                              double jitter = 0.05) {
  std::mt19937_64 rng(seed);
  std::vector<LabeledSample> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(spring_sample(rng, jitter, static_cast<int>(k)));
  return out;
}

inline Architecture spring_arch(HeadType head) {
  Architecture a;
  a.descriptor.species = {1, 8};
  a.descriptor.cutoff = 3.0;
  a.descriptor.n_basis = 6;
  a.hidden = {16, 16};
  a.latent_dim = 8;
  a.head = head;
  return a;
}

}  // namespace uqlab::testing

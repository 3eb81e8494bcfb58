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

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace uqlab {

// One atomic configuration. Positions are n x 3 in Angstrom; the optional
// cell holds lattice vectors as rows (absent = open boundary).
struct Structure {
  std::string id;
  std::vector<int> atomic_numbers;
  Eigen::MatrixXd positions;
  std::optional<Eigen::Matrix3d> cell;

  std::size_t size() const { return atomic_numbers.size(); }

  // Throws DomainError on n == 0, shape mismatch, non-positive atomic
  // numbers or non-finite coordinates.
  void validate() const;
};

// Structure with ground-truth labels: energy in kcal/mol, forces n x 3 in
// kcal/mol/Angstrom.
struct LabeledSample {
  Structure structure;
  double energy = 0.0;
  Eigen::MatrixXd forces;
  std::string provenance;
};

// Standard atomic mass in amu for Z in [1, 36].
double standard_atomic_mass(int atomic_number);

// Minimum-image displacement r_j - r_i (plain difference without a cell).
Eigen::RowVector3d displacement(const Structure& s, Eigen::Index i,
                                Eigen::Index j);

// Minimum-image RMSD between two structures with identical atom ordering.
double rmsd(const Structure& a, const Structure& b);

}  // namespace uqlab

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

#include "uqlab/potential/structure.hpp"

#include <array>
#include <cmath>

#include "uqlab/common/error.hpp"

namespace uqlab {

void Structure::validate() const {
  if (atomic_numbers.empty()) throw DomainError("empty structure '" + id + "'");
  if (positions.rows() != static_cast<Eigen::Index>(atomic_numbers.size()) ||
      positions.cols() != 3) {
    throw DomainError("structure '" + id + "': positions must be n x 3");
  }
  for (int z : atomic_numbers) {
    if (z <= 0) throw DomainError("structure '" + id + "': atomic number <= 0");
  }
  if (!positions.allFinite()) {
    throw DomainError("structure '" + id + "': non-finite coordinates");
  }
  if (cell && !cell->allFinite()) {
    throw DomainError("structure '" + id + "': non-finite cell");
  }
}

double standard_atomic_mass(int atomic_number) {
  static constexpr std::array<double, 36> kMasses = {
      1.008,  4.0026, 6.94,   9.0122, 10.81,  12.011, 14.007, 15.999, 18.998,
      20.180, 22.990, 24.305, 26.982, 28.085, 30.974, 32.06,  35.45,  39.948,
      39.098, 40.078, 44.956, 47.867, 50.942, 51.996, 54.938, 55.845, 58.933,
      58.693, 63.546, 65.38,  69.723, 72.630, 74.922, 78.971, 79.904, 83.798};
  if (atomic_number < 1 || atomic_number > static_cast<int>(kMasses.size())) {
    throw DomainError("no standard mass for Z=" + std::to_string(atomic_number));
  }
  return kMasses[static_cast<std::size_t>(atomic_number - 1)];
}

Eigen::RowVector3d displacement(const Structure& s, Eigen::Index i,
                                Eigen::Index j) {
  Eigen::RowVector3d d = s.positions.row(j) - s.positions.row(i);
  if (s.cell) {
    const Eigen::Matrix3d& h = *s.cell;
    Eigen::RowVector3d frac = d * h.inverse();
    for (int k = 0; k < 3; ++k) frac(k) -= std::round(frac(k));
    d = frac * h;
  }
  return d;
}

double rmsd(const Structure& a, const Structure& b) {
  if (a.size() != b.size()) throw DomainError("rmsd: atom counts differ");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(a.size()); ++i) {
    Eigen::RowVector3d d = b.positions.row(i) - a.positions.row(i);
    if (a.cell) {
      const Eigen::Matrix3d& h = *a.cell;
      Eigen::RowVector3d frac = d * h.inverse();
      for (int k = 0; k < 3; ++k) frac(k) -= std::round(frac(k));
      d = frac * h;
    }
    acc += d.squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace uqlab

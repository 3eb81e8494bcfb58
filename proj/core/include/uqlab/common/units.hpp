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

// Unit system: kcal/mol, Angstrom, fs, amu, K.
namespace uqlab::units {

inline constexpr double kBoltzmann = 0.0019872043;  // kcal/mol/K
// (kcal/mol/Angstrom) / amu expressed in Angstrom/fs^2.
inline constexpr double kForceToAccel = 4.184e-4;
// amu * Angstrom^2 / fs^2 expressed in kcal/mol.
inline constexpr double kMvvToKcal = 1.0 / kForceToAccel;

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace uqlab::units

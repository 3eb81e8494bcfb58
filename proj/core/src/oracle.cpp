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

#include "uqlab/oracle/oracle.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <set>

#include "uqlab/common/error.hpp"
#include "uqlab/common/units.hpp"
#include "uqlab/potential/serialization.hpp"

namespace uqlab {

using Eigen::RowVector3d;
using Eigen::Vector3d;

void OracleSpec::validate() const {
  if (kind == OracleKind::kInversionMolecule) {
    const InversionParams& p = inversion;
    if (!(p.barrier > 0.0)) throw ConfigError("oracle barrier must be positive");
    if (!(p.stiffness > 0.0)) throw ConfigError("oracle stiffness must be positive");
    if (!(p.well_offset > 0.0) || !(p.bond_length > p.well_offset)) {
      throw ConfigError("oracle needs 0 < well_offset < bond_length");
    }
    if (p.central_species <= 0 || p.satellite_species <= 0) {
      throw ConfigError("oracle species must be positive atomic numbers");
    }
  } else {
    const PairClusterParams& p = cluster;
    if (p.atoms < 2) throw ConfigError("pair cluster needs at least 2 atoms");
    if (!(p.depth > 0.0) || !(p.width > 0.0) || !(p.equilibrium > 0.0)) {
      throw ConfigError("pair cluster parameters must be positive");
    }
    if (!(p.cutoff > p.equilibrium)) throw ConfigError("pair cluster cutoff too short");
  }
  for (const auto& [z, m] : masses) {
    if (z <= 0 || !(m > 0.0)) throw ConfigError("oracle masses must be positive");
  }
}

std::string_view to_string(OracleKind kind) {
  return kind == OracleKind::kInversionMolecule ? "inversion_molecule" : "pair_cluster";
}

OracleKind oracle_kind_from_string(std::string_view name) {
  if (name == "inversion_molecule") return OracleKind::kInversionMolecule;
  if (name == "pair_cluster") return OracleKind::kPairCluster;
  throw ConfigError("unknown oracle kind '" + std::string(name) + "'");
}

nlohmann::json oracle_to_json(const OracleSpec& spec) {
  const InversionParams& i = spec.inversion;
  const PairClusterParams& c = spec.cluster;
  nlohmann::json masses = nlohmann::json::object();
  for (const auto& [z, m] : spec.masses) masses[std::to_string(z)] = m;
  return {{"kind", std::string(to_string(spec.kind))},
          {"inversion",
           {{"central_species", i.central_species},
            {"satellite_species", i.satellite_species},
            {"barrier", i.barrier},
            {"bond_length", i.bond_length},
            {"well_offset", i.well_offset},
            {"stiffness", i.stiffness}}},
          {"cluster",
           {{"species", c.species},
            {"atoms", c.atoms},
            {"depth", c.depth},
            {"width", c.width},
            {"equilibrium", c.equilibrium},
            {"cutoff", c.cutoff}}},
          {"masses", masses}};
}

OracleSpec oracle_from_json(const nlohmann::json& j) {
  OracleSpec s;
  s.kind = oracle_kind_from_string(j.value("kind", std::string("inversion_molecule")));
  if (j.contains("inversion")) {
    const nlohmann::json& i = j.at("inversion");
    InversionParams& p = s.inversion;
    p.central_species = i.value("central_species", p.central_species);
    p.satellite_species = i.value("satellite_species", p.satellite_species);
    p.barrier = i.value("barrier", p.barrier);
    p.bond_length = i.value("bond_length", p.bond_length);
    p.well_offset = i.value("well_offset", p.well_offset);
    p.stiffness = i.value("stiffness", p.stiffness);
  }
  if (j.contains("cluster")) {
    const nlohmann::json& c = j.at("cluster");
    PairClusterParams& p = s.cluster;
    p.species = c.value("species", p.species);
    p.atoms = c.value("atoms", p.atoms);
    p.depth = c.value("depth", p.depth);
    p.width = c.value("width", p.width);
    p.equilibrium = c.value("equilibrium", p.equilibrium);
    p.cutoff = c.value("cutoff", p.cutoff);
  }
  if (j.contains("masses")) {
    for (const auto& [key, value] : j.at("masses").items()) {
      s.masses[std::stoi(key)] = value.get<double>();
    }
  }
  s.validate();
  return s;
}

double Oracle::mass(int atomic_number) const {
  const auto it = spec().masses.find(atomic_number);
  return it != spec().masses.end() ? it->second : standard_atomic_mass(atomic_number);
}

void Oracle::check_species(const Structure& s) const {
  const std::vector<int> known = species();
  for (int z : s.atomic_numbers) {
    if (std::find(known.begin(), known.end(), z) == known.end()) {
      throw DomainError("structure '" + s.id + "' contains species " + std::to_string(z) +
                        " unknown to the " + std::string(to_string(spec().kind)) + " oracle");
    }
  }
}

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec) {
  if (spec.kind == OracleKind::kInversionMolecule) {
    return std::make_unique<InversionOracle>(spec);
  }
  return std::make_unique<PairClusterOracle>(spec);
}

InversionOracle::InversionOracle(OracleSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const InversionParams& p = spec_.inversion;
  quartic_ = p.barrier / std::pow(p.well_offset, 4);
  const double radius = std::sqrt(p.bond_length * p.bond_length - p.well_offset * p.well_offset);
  satellite_distance_ = std::sqrt(3.0) * radius;
}

std::vector<int> InversionOracle::species() const {
  return {spec_.inversion.central_species, spec_.inversion.satellite_species};
}

namespace {

Structure inversion_geometry(const InversionParams& p, double height) {
  const double radius = std::sqrt(p.bond_length * p.bond_length - p.well_offset * p.well_offset);
  Structure s;
  s.id = "inversion-reference";
  s.atomic_numbers = {p.central_species, p.satellite_species, p.satellite_species,
                      p.satellite_species};
  s.positions = Eigen::MatrixXd::Zero(4, 3);
  s.positions.row(0) = RowVector3d(0.0, 0.0, height);
  for (int k = 0; k < 3; ++k) {
    const double phi = 2.0 * units::kPi * k / 3.0;
    s.positions.row(k + 1) = RowVector3d(radius * std::cos(phi), radius * std::sin(phi), 0.0);
  }
  return s;
}

}  // namespace

Structure InversionOracle::minimum() const {
  return inversion_geometry(spec_.inversion, spec_.inversion.well_offset);
}

Structure InversionOracle::planar_transition() const {
  return inversion_geometry(spec_.inversion, 0.0);
}

double InversionOracle::height(const Structure& s) const {
  const Vector3d r1 = s.positions.row(1).transpose();
  const Vector3d a = s.positions.row(2).transpose() - r1;
  const Vector3d b = s.positions.row(3).transpose() - r1;
  const Vector3d n = a.cross(b).normalized();
  const Vector3d c = (s.positions.row(1) + s.positions.row(2) + s.positions.row(3)).transpose() / 3.0;
  return (s.positions.row(0).transpose() - c).dot(n);
}

ForceEval InversionOracle::evaluate(const Structure& s) const {
  check_species(s);
  const InversionParams& p = spec_.inversion;
  if (s.size() != 4 || s.atomic_numbers[0] != p.central_species ||
      s.atomic_numbers[1] != p.satellite_species || s.atomic_numbers[2] != p.satellite_species ||
      s.atomic_numbers[3] != p.satellite_species) {
    throw DomainError("structure '" + s.id +
                      "' is not laid out as central atom followed by three satellites");
  }
  const double k = p.stiffness;
  std::array<Vector3d, 4> r;
  for (int i = 0; i < 4; ++i) r[i] = s.positions.row(i).transpose();
  std::array<Vector3d, 4> g;
  for (Vector3d& v : g) v.setZero();
  double e = 0.0;

  for (int i = 1; i < 4; ++i) {
    for (int j = i + 1; j < 4; ++j) {
      const Vector3d d = r[j] - r[i];
      const double len = d.norm();
      const double strain = len - satellite_distance_;
      e += 0.5 * k * strain * strain;
      const Vector3d gd = k * strain / len * d;
      g[j] += gd;
      g[i] -= gd;
    }
  }

  const Vector3d a = r[2] - r[1];
  const Vector3d b = r[3] - r[1];
  const Vector3d m = a.cross(b);
  const double mn = m.norm();
  if (!(mn > 0.0)) throw NumericError("satellites of '" + s.id + "' are collinear");
  const Vector3d n = m / mn;
  const Vector3d u = r[0] - (r[1] + r[2] + r[3]) / 3.0;
  const double h = u.dot(n);
  const Vector3d in_plane = u - h * n;
  const Vector3d gn = in_plane / mn;
  std::array<Vector3d, 4> dh;
  dh[0] = n;
  dh[2] = b.cross(gn) - n / 3.0;
  dh[3] = gn.cross(a) - n / 3.0;
  dh[1] = -b.cross(gn) - gn.cross(a) - n / 3.0;

  e += 0.5 * k * in_plane.squaredNorm();
  g[0] += k * (u - h * dh[0]);
  for (int i = 1; i < 4; ++i) g[i] += k * (-u / 3.0 - h * dh[i]);

  const double h0sq = p.well_offset * p.well_offset;
  const double w = h * h - h0sq;
  e += quartic_ * w * w;
  const double dw = 4.0 * quartic_ * h * w;
  for (int i = 0; i < 4; ++i) g[i] += dw * dh[i];

  ForceEval out;
  out.energy = e;
  out.forces.resize(4, 3);
  for (int i = 0; i < 4; ++i) out.forces.row(i) = -g[i].transpose();
  return out;
}

PairClusterOracle::PairClusterOracle(OracleSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  const PairClusterParams& p = spec_.cluster;
  Rng rng(0x636c7573);
  const double radius = p.equilibrium * std::cbrt(static_cast<double>(p.atoms)) * 0.6;
  std::uniform_real_distribution<double> u(-radius, radius);
  FunctionForceField raw_ff([this](const Structure& s) { return raw(s); });
  double best = std::numeric_limits<double>::infinity();
  for (int start = 0; start < 24; ++start) {
    Structure s;
    s.id = "cluster-reference";
    s.atomic_numbers.assign(static_cast<std::size_t>(p.atoms), p.species);
    s.positions.resize(p.atoms, 3);
    for (int i = 0; i < p.atoms; ++i) {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const RowVector3d x(u(rng), u(rng), u(rng));
        bool ok = x.norm() <= radius;
        for (int j = 0; j < i && ok; ++j) {
          ok = (s.positions.row(j) - x).norm() > 0.8 * p.equilibrium;
        }
        s.positions.row(i) = x;
        if (ok) break;
      }
    }
    Structure relaxed = relax(s, raw_ff, 20000, 1e-9);
    const double e = raw(relaxed).energy;
    if (e < best) {
      best = e;
      minimum_ = std::move(relaxed);
    }
  }
  const RowVector3d centre = minimum_.positions.colwise().mean();
  minimum_.positions.rowwise() -= centre;
  offset_ = best;
  binding_ = -best;
}

ForceEval PairClusterOracle::raw(const Structure& s) const {
  check_species(s);
  const PairClusterParams& p = spec_.cluster;
  auto morse = [&](double r, double* slope) {
    const double x = std::exp(-p.width * (r - p.equilibrium));
    *slope = 2.0 * p.depth * p.width * x * (1.0 - x);
    return p.depth * ((1.0 - x) * (1.0 - x) - 1.0);
  };
  double slope_c = 0.0;
  const double value_c = morse(p.cutoff, &slope_c);
  const auto n = static_cast<Eigen::Index>(s.size());
  ForceEval out{0.0, Eigen::MatrixXd::Zero(n, 3)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const RowVector3d d = displacement(s, i, j);
      const double r = d.norm();
      if (r >= p.cutoff) continue;
      double slope = 0.0;
      const double v = morse(r, &slope);
      out.energy += v - value_c - (r - p.cutoff) * slope_c;
      const RowVector3d f = -(slope - slope_c) / r * d;
      out.forces.row(j) += f;
      out.forces.row(i) -= f;
    }
  }
  return out;
}

ForceEval PairClusterOracle::evaluate(const Structure& s) const {
  ForceEval out = raw(s);
  out.energy -= offset_;
  return out;
}

Structure relax(const Structure& s, const ForceField& ff, int max_steps,
                double force_tolerance) {
  constexpr double kDtMax = 0.5;
  constexpr double kMaxMove = 0.1;
  Structure x = s;
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(x.positions.rows(), 3);
  double dt = 0.05;
  double alpha = 0.1;
  int positive = 0;
  for (int step = 0; step < max_steps; ++step) {
    const Eigen::MatrixXd f = ff.evaluate(x).forces;
    if (f.cwiseAbs().maxCoeff() < force_tolerance) break;
    const double power = (f.array() * v.array()).sum();
    if (power > 0.0) {
      v = (1.0 - alpha) * v + alpha * v.norm() / f.norm() * f;
      if (++positive > 5) {
        dt = std::min(dt * 1.1, kDtMax);
        alpha *= 0.99;
      }
    } else {
      v.setZero();
      dt *= 0.5;
      alpha = 0.1;
      positive = 0;
    }
    v += dt * f;
    Eigen::MatrixXd move = dt * v;
    const double longest = move.rowwise().norm().maxCoeff();
    if (longest > kMaxMove) move *= kMaxMove / longest;
    x.positions += move;
  }
  return x;
}

LabeledSample label(const Oracle& oracle, const Structure& s, std::string provenance) {
  ForceEval e = oracle.evaluate(s);
  return {s, e.energy, std::move(e.forces), std::move(provenance)};
}

std::vector<LabeledSample> generate_initial_dataset(const Oracle& oracle, std::size_t n,
                                                    double temperature, std::uint64_t seed,
                                                    std::optional<double> cap) {
  if (n == 0) throw DomainError("initial dataset size must be >= 1");
  if (!(temperature > 0.0)) throw DomainError("sampling temperature must be positive");
  const double limit = cap.value_or(oracle.reference_energy() / 5.0);
  constexpr int kEquilibration = 200;
  constexpr int kStride = 20;
  const auto* inversion = dynamic_cast<const InversionOracle*>(&oracle);

  MDConfig cfg;
  cfg.ensemble = Ensemble::kNvt;
  cfg.temperature = temperature;
  cfg.dt = 0.5;
  cfg.frame_stride = kStride;
  cfg.rules = StabilityRules::preset("none");
  cfg.steps = kEquilibration + kStride * static_cast<int>(n) * 20;
  const Structure start = oracle.minimum();
  const Trajectory traj = run_md(start, std::nullopt, oracle, cfg, derive_seed(seed, {0x696e6974}));

  std::vector<LabeledSample> out;
  const double sign = inversion ? std::copysign(1.0, inversion->height(start)) : 1.0;
  for (const Frame& f : traj.frames) {
    if (f.step < kEquilibration) continue;
    Structure s = start;
    s.positions = f.positions;
    s.id = "init-" + std::to_string(seed) + "-" + std::to_string(out.size());
    LabeledSample sample = label(oracle, s, "initial");
    if (sample.energy >= limit) continue;
    if (inversion && inversion->height(s) * sign <= 0.0) continue;
    out.push_back(std::move(sample));
    if (out.size() == n) return out;
  }
  throw DomainError("only " + std::to_string(out.size()) + " of " + std::to_string(n) +
                    " frames stayed below the energy cap " + std::to_string(limit) +
                    "; lower the sampling temperature");
}

std::vector<LabeledSample> generate_test_ladder(const Oracle& oracle, const LadderOptions& opts,
                                                std::uint64_t seed, std::size_t* shortfall) {
  if (opts.bins == 0) throw DomainError("test ladder needs at least one bin");
  const double ceiling = opts.ceiling.value_or(1.2 * oracle.reference_energy());
  if (!(ceiling > 0.0)) throw DomainError("test ladder ceiling must be positive");
  std::vector<std::vector<LabeledSample>> bins(opts.bins);
  std::size_t open = opts.per_bin > 0 ? opts.bins : 0;
  Rng rng(derive_seed(seed, {0x6c616464}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Structure base = oracle.minimum();
  const auto* inversion = dynamic_cast<const InversionOracle*>(&oracle);
  Structure mirror = base;
  if (inversion) mirror.positions.col(2) *= -1.0;
  const double max_noise = inversion ? 0.25 : 0.6;

  for (std::size_t trial = 0; trial < opts.budget && open > 0; ++trial) {
    Structure c = base;
    if (inversion && unit(rng) < 0.5) {
      const double lambda = unit(rng);
      c.positions = (1.0 - lambda) * base.positions + lambda * mirror.positions;
    }
    const double sigma = 0.002 * std::pow(max_noise / 0.002, unit(rng));
    for (Eigen::Index i = 0; i < c.positions.size(); ++i) c.positions(i) += sigma * normal(rng);
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    c.positions = c.positions * q.toRotationMatrix().transpose();
    double e = 0.0;
    try {
      e = oracle.evaluate(c).energy;
    } catch (const NumericError&) {
      continue;
    }
    if (!(e >= 0.0) || e >= ceiling) continue;
    const auto b = std::min(opts.bins - 1, static_cast<std::size_t>(e / ceiling * opts.bins));
    if (bins[b].size() >= opts.per_bin) continue;
    c.id = "ladder-" + std::to_string(seed) + "-" + std::to_string(b) + "-" +
           std::to_string(bins[b].size());
    bins[b].push_back(label(oracle, c, "test_ladder"));
    if (bins[b].size() == opts.per_bin) --open;
  }
  std::vector<LabeledSample> out;
  std::size_t missing = 0;
  for (auto& bin : bins) {
    missing += opts.per_bin - bin.size();
    for (auto& sample : bin) out.push_back(std::move(sample));
  }
  if (shortfall) *shortfall = missing;
  return out;
}

nlohmann::json sample_to_json(const LabeledSample& s) {
  nlohmann::json j = structure_to_json(s.structure);
  nlohmann::json forces = nlohmann::json::array();
  for (Eigen::Index i = 0; i < s.forces.rows(); ++i) {
    forces.push_back({s.forces(i, 0), s.forces(i, 1), s.forces(i, 2)});
  }
  j["energy"] = s.energy;
  j["forces"] = std::move(forces);
  j["provenance"] = s.provenance;
  return j;
}

LabeledSample sample_from_json(const nlohmann::json& j) {
  try {
    LabeledSample s;
    s.structure = structure_from_json(j);
    s.energy = j.at("energy").get<double>();
    const nlohmann::json& f = j.at("forces");
    if (f.size() != s.structure.size()) throw IoError("force rows do not match atoms");
    s.forces.resize(static_cast<Eigen::Index>(f.size()), 3);
    for (std::size_t i = 0; i < f.size(); ++i) {
      for (int k = 0; k < 3; ++k) s.forces(static_cast<Eigen::Index>(i), k) = f[i].at(k).get<double>();
    }
    s.provenance = j.value("provenance", std::string());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed sample: ") + e.what());
  }
}

void write_samples(const std::vector<LabeledSample>& samples, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const LabeledSample& s : samples) out << sample_to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<LabeledSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(sample_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace uqlab

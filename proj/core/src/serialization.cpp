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

#include "uqlab/potential/serialization.hpp"

#include <fstream>

#include "uqlab/common/encoding.hpp"
#include "uqlab/common/error.hpp"

namespace uqlab {

using nlohmann::json;

json descriptor_to_json(const DescriptorConfig& cfg) {
  return {{"cutoff", cfg.cutoff},
          {"n_basis", cfg.n_basis},
          {"r_min", cfg.r_min},
          {"width", cfg.width},
          {"angular_zetas", cfg.angular_zetas},
          {"angular_eta", cfg.angular_eta},
          {"species", cfg.species}};
}

DescriptorConfig descriptor_from_json(const json& j) {
  DescriptorConfig cfg;
  cfg.cutoff = j.value("cutoff", cfg.cutoff);
  cfg.n_basis = j.value("n_basis", cfg.n_basis);
  cfg.r_min = j.value("r_min", cfg.r_min);
  cfg.width = j.value("width", cfg.width);
  cfg.angular_zetas = j.value("angular_zetas", cfg.angular_zetas);
  cfg.angular_eta = j.value("angular_eta", cfg.angular_eta);
  cfg.species = j.value("species", cfg.species);
  return cfg;
}

json architecture_to_json(const Architecture& arch) {
  return {{"descriptor", descriptor_to_json(arch.descriptor)},
          {"hidden", arch.hidden},
          {"latent_dim", arch.latent_dim},
          {"head", std::string(to_string(arch.head))},
          {"activation", std::string(to_string(arch.activation))}};
}

Architecture architecture_from_json(const json& j) {
  Architecture arch;
  if (j.contains("descriptor")) arch.descriptor = descriptor_from_json(j.at("descriptor"));
  arch.hidden = j.value("hidden", arch.hidden);
  arch.latent_dim = j.value("latent_dim", arch.latent_dim);
  arch.head = head_from_string(j.value("head", std::string("standard")));
  arch.activation = activation_from_string(j.value("activation", std::string("tanh")));
  return arch;
}

json model_to_json(const ModelBundle& model) {
  json members = json::array();
  for (const ParamVector& p : model.members) {
    json segments = json::array();
    for (const Segment& s : p.layout) {
      segments.push_back(
          {{"name", s.name},
           {"rows", s.rows},
           {"cols", s.cols},
           {"data", encode_doubles({p.values.data() + s.offset,
                                    static_cast<std::size_t>(s.size())})}});
    }
    members.push_back({{"segments", std::move(segments)}});
  }
  return {{"format_version", kModelFormatVersion},
          {"architecture", architecture_to_json(model.arch)},
          {"normalization",
           {{"energy_shift", model.norm.energy_shift},
            {"energy_scale", model.norm.energy_scale}}},
          {"config_hash", model.config_hash},
          {"members", std::move(members)}};
}

ModelBundle model_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw IoError("unsupported model format version " + std::to_string(version));
    }
    ModelBundle m;
    m.arch = architecture_from_json(j.at("architecture"));
    m.norm.energy_shift = j.at("normalization").at("energy_shift").get<double>();
    m.norm.energy_scale = j.at("normalization").at("energy_scale").get<double>();
    m.config_hash = j.value("config_hash", std::string());
    const std::vector<Segment> layout = parameter_layout(m.arch);
    for (const json& member : j.at("members")) {
      ParamVector p;
      p.layout = layout;
      const Segment& last = layout.back();
      p.values.resize(last.offset + last.size());
      const json& segs = member.at("segments");
      if (segs.size() != layout.size()) throw IoError("segment count mismatch");
      for (std::size_t k = 0; k < layout.size(); ++k) {
        const Segment& s = layout[k];
        if (segs[k].at("name").get<std::string>() != s.name ||
            segs[k].at("rows").get<diff::Index>() != s.rows ||
            segs[k].at("cols").get<diff::Index>() != s.cols) {
          throw IoError("segment '" + s.name + "' does not match the architecture");
        }
        const std::vector<double> data =
            decode_doubles(segs[k].at("data").get<std::string>());
        if (static_cast<diff::Index>(data.size()) != s.size()) {
          throw IoError("segment '" + s.name + "' has the wrong length");
        }
        std::copy(data.begin(), data.end(), p.values.data() + s.offset);
      }
      m.members.push_back(std::move(p));
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed model document: ") + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("cannot parse " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void save_model(const ModelBundle& model, const std::filesystem::path& path) {
  write_json_file(path, model_to_json(model));
}

ModelBundle load_model(const std::filesystem::path& path) {
  return model_from_json(read_json_file(path));
}

json structure_to_json(const Structure& s) {
  json positions = json::array();
  for (Eigen::Index i = 0; i < s.positions.rows(); ++i) {
    positions.push_back({s.positions(i, 0), s.positions(i, 1), s.positions(i, 2)});
  }
  json j = {{"id", s.id}, {"atomic_numbers", s.atomic_numbers}, {"positions", positions}};
  if (s.cell) {
    json cell = json::array();
    for (int r = 0; r < 3; ++r) cell.push_back({(*s.cell)(r, 0), (*s.cell)(r, 1), (*s.cell)(r, 2)});
    j["cell"] = cell;
  }
  return j;
}

Structure structure_from_json(const json& j) {
  try {
    Structure s;
    s.id = j.value("id", std::string());
    s.atomic_numbers = j.at("atomic_numbers").get<std::vector<int>>();
    const json& pos = j.at("positions");
    s.positions.resize(static_cast<Eigen::Index>(pos.size()), 3);
    for (std::size_t i = 0; i < pos.size(); ++i) {
      for (int k = 0; k < 3; ++k) s.positions(static_cast<Eigen::Index>(i), k) = pos[i].at(k).get<double>();
    }
    if (j.contains("cell") && !j.at("cell").is_null()) {
      Eigen::Matrix3d cell;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cell(r, c) = j.at("cell").at(r).at(c).get<double>();
      }
      s.cell = cell;
    }
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed structure: ") + e.what());
  }
}

}  // namespace uqlab

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

#include "uqlab/orchestrator/config.hpp"

#include <functional>
#include <map>

#include "uqlab/common/encoding.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/potential/serialization.hpp"

namespace uqlab {

using json = nlohmann::json;

std::string_view to_string(Acquisition a) {
  switch (a) {
    case Acquisition::kEnsemble: return "ensemble";
    case Acquisition::kMve: return "mve";
    case Acquisition::kEvidential: return "evidential";
    case Acquisition::kGmm: return "gmm";
    case Acquisition::kRandom: return "random";
  }
  return "ensemble";
}

Acquisition acquisition_from_string(std::string_view name) {
  if (name == "random") return Acquisition::kRandom;
  switch (scheme_from_string(name)) {
    case Scheme::kEnsemble: return Acquisition::kEnsemble;
    case Scheme::kMve: return Acquisition::kMve;
    case Scheme::kEvidential: return Acquisition::kEvidential;
    case Scheme::kGmm: return Acquisition::kGmm;
  }
  return Acquisition::kEnsemble;
}

std::optional<Scheme> scheme_of(Acquisition a) {
  switch (a) {
    case Acquisition::kEnsemble: return Scheme::kEnsemble;
    case Acquisition::kMve: return Scheme::kMve;
    case Acquisition::kEvidential: return Scheme::kEvidential;
    case Acquisition::kGmm: return Scheme::kGmm;
    case Acquisition::kRandom: return std::nullopt;
  }
  return std::nullopt;
}

HeadType head_of(Acquisition a) {
  const auto s = scheme_of(a);
  return s ? head_for_scheme(*s) : HeadType::kStandard;
}

namespace {

using Handler = std::function<void(const json&)>;

// Applies one handler per key; anything else is a config error.
void read_section(const json& j, const std::string& section,
                  const std::map<std::string, Handler>& handlers) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = handlers.find(key);
    if (it == handlers.end()) {
      throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
    }
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
    }
  }
}

template <class T>
Handler set(T& target) {
  return [&target](const json& v) { target = v.get<T>(); };
}

template <class T>
Handler set_optional(std::optional<T>& target) {
  return [&target](const json& v) {
    if (v.is_null()) target.reset();
    else target = v.get<T>();
  };
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string_view to_string(ErrorMode m) { return m == ErrorMode::kAtom ? "atom" : "structure_rmse"; }

ErrorMode error_mode_from_string(std::string_view s) {
  if (s == "structure_rmse") return ErrorMode::kStructureRmse;
  if (s == "atom") return ErrorMode::kAtom;
  throw ConfigError("unknown error mode '" + std::string(s) + "'");
}

}  // namespace

json md_config_to_json(const MDConfig& c) {
  return {{"ensemble", c.ensemble == Ensemble::kNve ? "nve" : "nvt"},
          {"temperature", c.temperature},
          {"dt", c.dt},
          {"steps", c.steps},
          {"thermostat_q", c.thermostat_q},
          {"frame_stride", c.frame_stride},
          {"rules", rules_to_json(c.rules)}};
}

MDConfig md_config_from_json(const json& j) {
  MDConfig c;
  std::string ensemble = "nvt";
  read_section(j, "md", {{"ensemble", set(ensemble)},
                         {"temperature", set(c.temperature)},
                         {"dt", set(c.dt)},
                         {"steps", set(c.steps)},
                         {"thermostat_q", set(c.thermostat_q)},
                         {"frame_stride", set(c.frame_stride)},
                         {"rules", [&](const json& v) { c.rules = rules_from_json(v); }}});
  if (ensemble == "nve") c.ensemble = Ensemble::kNve;
  else if (ensemble == "nvt") c.ensemble = Ensemble::kNvt;
  else throw ConfigError("md.ensemble must be 'nve' or 'nvt'");
  c.validate();
  return c;
}

json loss_to_json(const LossSpec& s) {
  return {{"energy_weight", s.energy_weight},
          {"force_weight", s.force_weight},
          {"evidential_lambda", s.evidential_lambda}};
}

LossSpec loss_from_json(const json& j) {
  LossSpec s;
  read_section(j, "loss", {{"energy_weight", set(s.energy_weight)},
                           {"force_weight", set(s.force_weight)},
                           {"evidential_lambda", set(s.evidential_lambda)}});
  s.validate();
  return s;
}

json hyper_to_json(const TrainHyper& h) {
  return {{"epochs", h.epochs},           {"learning_rate", h.learning_rate},
          {"batch_size", h.batch_size},   {"decay_every", h.decay_every},
          {"decay_factor", h.decay_factor}, {"patience", h.patience},
          {"gradient_clip", h.gradient_clip}, {"adam_beta1", h.adam_beta1},
          {"adam_beta2", h.adam_beta2},   {"adam_epsilon", h.adam_epsilon}};
}

TrainHyper hyper_from_json(const json& j) {
  TrainHyper h;
  read_section(j, "training", {{"epochs", set(h.epochs)},
                               {"learning_rate", set(h.learning_rate)},
                               {"batch_size", set(h.batch_size)},
                               {"decay_every", set(h.decay_every)},
                               {"decay_factor", set(h.decay_factor)},
                               {"patience", set(h.patience)},
                               {"gradient_clip", set(h.gradient_clip)},
                               {"adam_beta1", set(h.adam_beta1)},
                               {"adam_beta2", set(h.adam_beta2)},
                               {"adam_epsilon", set(h.adam_epsilon)}});
  h.validate();
  return h;
}

void ExperimentConfig::validate() const {
  oracle.validate();
  model.validate();
  training.validate();
  adversarial.validate();
  md.md.validate();
  resolved_loss().validate();
  if (generations < 1) throw ConfigError("generations must be >= 1");
  if (data.initial_samples < 1) throw ConfigError("data.initial_samples must be >= 1");
  if (!(data.sample_temperature > 0.0)) throw ConfigError("data.sample_temperature must be > 0");
  if (!(data.validation_fraction >= 0.0 && data.validation_fraction < 1.0)) {
    throw ConfigError("data.validation_fraction must lie in [0, 1)");
  }
  if (scheme == Acquisition::kEnsemble && ensemble_size < 2) {
    throw ConfigError("the ensemble scheme needs ensemble_size >= 2");
  }
  if (gmm.candidates.empty()) throw ConfigError("gmm.candidates must not be empty");
  for (int k : gmm.candidates) {
    if (k < 1) throw ConfigError("gmm.candidates must be positive");
  }
  if (!(gmm.regularization > 0.0)) throw ConfigError("gmm.regularization must be > 0");
  if (md.trajectories < 1) throw ConfigError("md.trajectories must be >= 1");
  if (!(random.scale >= 0.0)) throw ConfigError("random.scale must be >= 0");
  if (!(metrics.error_percentile > 0.0 && metrics.error_percentile < 100.0)) {
    throw ConfigError("metrics.error_percentile must lie in (0, 100)");
  }
  const std::vector<int> oracle_species = make_oracle(oracle)->species();
  for (int z : oracle_species) model.descriptor.species_index(z);
}

LossSpec ExperimentConfig::resolved_loss() const {
  LossSpec s = loss;
  s.kind = loss_for_head(head_of(scheme));
  return s;
}

std::size_t ExperimentConfig::members() const {
  return scheme == Acquisition::kEnsemble ? ensemble_size : 1;
}

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (!j.contains("schema_version")) throw ConfigError("config is missing schema_version");
  const int version = j.at("schema_version").get<int>();
  if (version < 1 || version > kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(version));
  }
  ExperimentConfig c;
  std::string output_dir = c.output_dir.string();
  bool species_given = false;
  read_section(
      j, "root",
      {{"schema_version", [](const json&) {}},
       {"seed", set(c.seed)},
       {"output_dir", set(output_dir)},
       {"threads", set(c.threads)},
       {"oracle", [&](const json& v) { c.oracle = oracle_from_json(v); }},
       {"data",
        [&](const json& v) {
          read_section(
              v, "data",
              {{"initial_samples", set(c.data.initial_samples)},
               {"sample_temperature", set(c.data.sample_temperature)},
               {"energy_cap", set_optional(c.data.energy_cap)},
               {"validation_fraction", set(c.data.validation_fraction)},
               {"ladder", [&](const json& l) {
                  read_section(l, "data.ladder",
                               {{"bins", set(c.data.ladder.bins)},
                                {"per_bin", set(c.data.ladder.per_bin)},
                                {"ceiling", set_optional(c.data.ladder.ceiling)},
                                {"budget", set(c.data.ladder.budget)}});
                }}});
        }},
       {"model",
        [&](const json& v) {
          c.model = architecture_from_json(v);
          species_given = v.contains("descriptor") && v.at("descriptor").contains("species");
        }},
       {"scheme", [&](const json& v) { c.scheme = acquisition_from_string(v.get<std::string>()); }},
       {"ensemble_size", set(c.ensemble_size)},
       {"gmm",
        [&](const json& v) {
          read_section(v, "gmm",
                       {{"candidates", set(c.gmm.candidates)},
                        {"pooling",
                         [&](const json& p) { c.gmm.pooling = pooling_from_string(p.get<std::string>()); }},
                        {"max_points", set(c.gmm.max_points)},
                        {"regularization", set(c.gmm.regularization)}});
        }},
       {"loss", [&](const json& v) { c.loss = loss_from_json(v); }},
       {"training", [&](const json& v) { c.training = hyper_from_json(v); }},
       {"adversarial", [&](const json& v) { c.adversarial = adversarial_from_json(v); }},
       {"random", [&](const json& v) { read_section(v, "random", {{"scale", set(c.random.scale)}}); }},
       {"md",
        [&](const json& v) {
          json inner = json::object();
          for (const auto& [key, value] : v.items()) {
            if (key == "trajectories") c.md.trajectories = value.get<std::size_t>();
            else if (key == "write_frames") c.md.write_frames = value.get<bool>();
            else inner[key] = value;
          }
          c.md.md = md_config_from_json(inner);
        }},
       {"metrics",
        [&](const json& v) {
          read_section(v, "metrics",
                       {{"error_percentile", set(c.metrics.error_percentile)},
                        {"error_mode", [&](const json& m) {
                           c.metrics.error_mode = error_mode_from_string(m.get<std::string>());
                         }}});
        }},
       {"generations", set(c.generations)}});
  c.output_dir = output_dir;
  if (!species_given) c.model.descriptor.species = make_oracle(c.oracle)->species();
  c.model.head = head_of(c.scheme);
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json md = md_config_to_json(c.md.md);
  md["trajectories"] = c.md.trajectories;
  md["write_frames"] = c.md.write_frames;
  return {{"schema_version", kConfigSchemaVersion},
          {"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"threads", c.threads},
          {"oracle", oracle_to_json(c.oracle)},
          {"data",
           {{"initial_samples", c.data.initial_samples},
            {"sample_temperature", c.data.sample_temperature},
            {"energy_cap", optional_json(c.data.energy_cap)},
            {"validation_fraction", c.data.validation_fraction},
            {"ladder",
             {{"bins", c.data.ladder.bins},
              {"per_bin", c.data.ladder.per_bin},
              {"ceiling", optional_json(c.data.ladder.ceiling)},
              {"budget", c.data.ladder.budget}}}}},
          {"model", architecture_to_json(c.model)},
          {"scheme", to_string(c.scheme)},
          {"ensemble_size", c.ensemble_size},
          {"gmm",
           {{"candidates", c.gmm.candidates},
            {"pooling", to_string(c.gmm.pooling)},
            {"max_points", c.gmm.max_points},
            {"regularization", c.gmm.regularization}}},
          {"loss", loss_to_json(c.loss)},
          {"training", hyper_to_json(c.training)},
          {"adversarial", adversarial_to_json(c.adversarial)},
          {"random", {{"scale", c.random.scale}}},
          {"md", md},
          {"metrics",
           {{"error_percentile", c.metrics.error_percentile},
            {"error_mode", to_string(c.metrics.error_mode)}}},
          {"generations", c.generations}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(read_json_file(path));
}

std::string config_hash(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  j.erase("threads");
  return sha256_hex(j.dump());
}

}  // namespace uqlab

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

#include "uqlab/orchestrator/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "uqlab/common/encoding.hpp"
#include "uqlab/common/error.hpp"
#include "uqlab/common/parallel.hpp"
#include "uqlab/common/random.hpp"
#include "uqlab/potential/serialization.hpp"

namespace uqlab {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Stream tags for derive_seed.
enum SeedTag : std::uint64_t {
  kInitialTag = 1,
  kLadderTag = 2,
  kSplitTag = 10,
  kInitTag = 11,
  kTrainTag = 12,
  kGmmTag = 13,
  kMdTag = 14,
  kAscentTag = 15,
  kSeedPickTag = 16,
  kRandomTag = 17,
};

std::string samples_text(const std::vector<LabeledSample>& samples) {
  std::string out;
  for (const LabeledSample& s : samples) out += sample_to_json(s).dump() + "\n";
  return out;
}

fs::path generation_dir(const fs::path& root, int g) { return root / ("gen-" + std::to_string(g)); }

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

json optional_metric(const std::optional<MetricReport>& m) {
  return m ? report_to_json(*m) : json(nullptr);
}

std::vector<const Structure*> structures_of(const std::vector<LabeledSample>& samples) {
  std::vector<const Structure*> out;
  out.reserve(samples.size());
  for (const LabeledSample& s : samples) out.push_back(&s.structure);
  return out;
}

}  // namespace

SharedData prepare_data(const ExperimentConfig& cfg) {
  const auto oracle = make_oracle(cfg.oracle);
  SharedData d;
  d.initial = generate_initial_dataset(*oracle, cfg.data.initial_samples, cfg.data.sample_temperature,
                                       derive_seed(cfg.seed, {kInitialTag}), cfg.data.energy_cap);
  d.ladder = generate_test_ladder(*oracle, cfg.data.ladder, derive_seed(cfg.seed, {kLadderTag}),
                                  &d.ladder_shortfall);
  if (d.ladder_shortfall > 0) {
    spdlog::warn("test ladder is {} samples short of {}", d.ladder_shortfall,
                 cfg.data.ladder.bins * cfg.data.ladder.per_bin);
  }
  d.initial_hash = sha256_hex(samples_text(d.initial));
  return d;
}

void save_shared(const SharedData& d, const fs::path& dir) {
  write_samples(d.initial, dir / "initial.jsonl");
  write_samples(d.ladder, dir / "test_ladder.jsonl");
  write_json_file(dir / "shared.json", {{"initial_hash", d.initial_hash},
                                        {"initial_count", d.initial.size()},
                                        {"ladder_count", d.ladder.size()},
                                        {"ladder_shortfall", d.ladder_shortfall}});
}

SharedData load_shared(const fs::path& dir) {
  SharedData d;
  d.initial = read_samples(dir / "initial.jsonl");
  d.ladder = read_samples(dir / "test_ladder.jsonl");
  d.initial_hash = sha256_hex(samples_text(d.initial));
  const json meta = read_json_file(dir / "shared.json");
  if (meta.at("initial_hash").get<std::string>() != d.initial_hash) {
    throw IoError(dir.string() + ": initial dataset does not match its recorded hash");
  }
  d.ladder_shortfall = meta.value("ladder_shortfall", std::size_t{0});
  return d;
}

json manifest_to_json(const GenerationRecord& r) {
  json samples = json::array();
  for (const ManifestEntry& e : r.manifest) samples.push_back({{"id", e.id}, {"provenance", e.provenance}});
  return {{"config_hash", r.config_hash},
          {"generation", r.generation},
          {"scheme", to_string(r.scheme)},
          {"samples", samples},
          {"training_ids", r.training_ids},
          {"validation_ids", r.validation_ids}};
}

json metrics_to_json(const GenerationRecord& r) {
  return {{"config_hash", r.config_hash},
          {"generation", r.generation},
          {"scheme", to_string(r.scheme)},
          {"mae_energy", r.mae_energy},
          {"mae_forces", r.mae_forces},
          {"uq", optional_metric(r.metrics)},
          {"gmm_k", r.gmm_k ? json(*r.gmm_k) : json(nullptr)},
          {"stability", summary_to_json(r.stability)},
          {"model_ids", r.model_ids},
          {"new_energies", r.new_energies}};
}

json record_to_json(const GenerationRecord& r) {
  json j = metrics_to_json(r);
  j["manifest"] = manifest_to_json(r);
  j["train_wall_seconds"] = r.train_wall_seconds;
  j["peak_tape_bytes"] = r.peak_tape_bytes;
  j["failed"] = r.failed;
  j["error"] = r.error;
  return j;
}

namespace {

MetricReport metric_report_from_json(const json& j) {
  MetricReport m;
  m.n = j.at("n").get<std::size_t>();
  m.spearman = j.at("spearman").get<double>();
  m.roc_auc = j.at("roc_auc").get<double>();
  m.miscal_area = j.at("miscal_area").get<double>();
  m.cnll = j.at("cnll").get<double>();
  m.calibration = calibration_from_json(j.at("calibration"));
  m.undefined = j.at("undefined").get<std::vector<std::string>>();
  return m;
}

StabilitySummary summary_from_json(const json& j) {
  StabilitySummary s;
  s.fraction = j.at("fraction").get<double>();
  s.mean_stable_time = j.at("mean_stable_time_fs").get<double>();
  s.count = j.at("count").get<std::size_t>();
  if (j.contains("failures")) {
    for (const auto& [k, v] : j.at("failures").items()) s.failures.emplace_back(k, v.get<std::size_t>());
  }
  return s;
}

}  // namespace

GenerationRecord record_from_json(const json& j) {
  try {
    GenerationRecord r;
    r.generation = j.at("generation").get<int>();
    r.scheme = acquisition_from_string(j.at("scheme").get<std::string>());
    r.config_hash = j.at("config_hash").get<std::string>();
    r.mae_energy = j.at("mae_energy").get<double>();
    r.mae_forces = j.at("mae_forces").get<double>();
    if (!j.at("uq").is_null()) r.metrics = metric_report_from_json(j.at("uq"));
    if (!j.at("gmm_k").is_null()) r.gmm_k = j.at("gmm_k").get<int>();
    r.stability = summary_from_json(j.at("stability"));
    r.model_ids = j.at("model_ids").get<std::vector<std::string>>();
    r.new_energies = j.at("new_energies").get<std::vector<double>>();
    const json& m = j.at("manifest");
    for (const json& e : m.at("samples")) {
      r.manifest.push_back({e.at("id").get<std::string>(), e.at("provenance").get<std::string>()});
    }
    r.training_ids = m.at("training_ids").get<std::vector<std::string>>();
    r.validation_ids = m.at("validation_ids").get<std::vector<std::string>>();
    r.train_wall_seconds = j.value("train_wall_seconds", 0.0);
    r.peak_tape_bytes = j.value("peak_tape_bytes", std::size_t{0});
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string{});
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed generation record: ") + e.what());
  }
}

std::vector<EvalPair> make_eval_pairs(const std::vector<LabeledSample>& samples,
                                      const std::vector<UncertaintyRecord>& records,
                                      const std::vector<PotentialOutput>& predictions,
                                      ErrorMode mode) {
  if (predictions.size() != samples.size() || (!records.empty() && records.size() != samples.size())) {
    throw DomainError("evaluation inputs differ in length");
  }
  std::vector<EvalPair> out;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const Eigen::MatrixXd diff = samples[s].forces - predictions[s].forces;
    const double u = records.empty() ? 0.0 : records[s].u;
    if (mode == ErrorMode::kStructureRmse) {
      EvalPair p;
      p.structure_id = samples[s].structure.id;
      p.u = u;
      p.eps = std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size()));
      p.eps_signed.assign(diff.data(), diff.data() + diff.size());
      out.push_back(std::move(p));
      continue;
    }
    for (Eigen::Index i = 0; i < diff.rows(); ++i) {
      EvalPair p;
      p.structure_id = samples[s].structure.id + ":" + std::to_string(i);
      p.u = u;
      p.eps = std::sqrt(diff.row(i).squaredNorm() / 3.0);
      for (int c = 0; c < 3; ++c) p.eps_signed.push_back(diff(i, c));
      out.push_back(std::move(p));
    }
  }
  return out;
}

namespace {

struct Split {
  std::vector<LabeledSample> training;
  std::vector<LabeledSample> validation;
};

Split split_dataset(const std::vector<LabeledSample>& data, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  if (fraction > 0.0 && n_val == 0 && data.size() >= 2) n_val = 1;
  std::vector<bool> is_val(data.size(), false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[idx[k]] = true;
  Split s;
  for (std::size_t i = 0; i < data.size(); ++i) (is_val[i] ? s.validation : s.training).push_back(data[i]);
  return s;
}

std::vector<PotentialOutput> predictions_for(const std::vector<LabeledSample>& samples,
                                             const ModelBundle& model,
                                             const std::vector<UncertaintyRecord>& records) {
  if (records.empty()) return predict_batch(structures_of(samples), model, 0);
  std::vector<PotentialOutput> out(records.size());
  for (std::size_t k = 0; k < records.size(); ++k) {
    out[k].structure_id = records[k].structure_id;
    out[k].energy = records[k].energy;
    out[k].forces = records[k].forces;
  }
  return out;
}

void check_isolation(const std::vector<LabeledSample>& dataset, const std::vector<LabeledSample>& ladder) {
  std::vector<std::string> test_ids;
  for (const LabeledSample& s : ladder) test_ids.push_back(s.structure.id);
  std::sort(test_ids.begin(), test_ids.end());
  std::vector<std::string> seen;
  for (const LabeledSample& s : dataset) {
    if (std::binary_search(test_ids.begin(), test_ids.end(), s.structure.id)) {
      throw DomainError("test sample " + s.structure.id + " leaked into the training data");
    }
    seen.push_back(s.structure.id);
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw DomainError("duplicate sample id in the training data");
  }
}

void check_run_dir(const fs::path& root, const std::string& hash, const ExperimentConfig& cfg) {
  const fs::path cfg_path = root / "config.json";
  if (fs::exists(cfg_path)) {
    const json existing = read_json_file(cfg_path);
    if (existing.value("config_hash", std::string{}) != hash) {
      throw ConfigError(root.string() + " holds a run with a different config hash; refusing to overwrite");
    }
  }
  json j = config_to_json(cfg);
  j["config_hash"] = hash;
  write_json_file(cfg_path, j);
}

class GenerationRunner {
 public:
  GenerationRunner(const ExperimentConfig& cfg, const SharedData& shared, std::string hash)
      : cfg_(cfg), shared_(shared), hash_(std::move(hash)), oracle_(make_oracle(cfg.oracle)) {}

  // Fills `rec` for generation g trained on `dataset`; returns new samples
  // when another generation follows.
  std::vector<LabeledSample> run(int g, const std::vector<LabeledSample>& dataset,
                                 GenerationRecord& rec) {
    const fs::path dir = generation_dir(cfg_.output_dir, g);
    fs::create_directories(dir);
    rec.generation = g;
    rec.scheme = cfg_.scheme;
    rec.config_hash = hash_;
    for (const LabeledSample& s : dataset) rec.manifest.push_back({s.structure.id, s.provenance});
    check_isolation(dataset, shared_.ladder);

    const Split split = split_dataset(dataset, cfg_.data.validation_fraction,
                                      derive_seed(cfg_.seed, {kSplitTag, static_cast<std::uint64_t>(g)}));
    for (const LabeledSample& s : split.training) rec.training_ids.push_back(s.structure.id);
    for (const LabeledSample& s : split.validation) rec.validation_ids.push_back(s.structure.id);
    write_json_file(dir / "manifest.json", manifest_to_json(rec));
    write_samples(dataset, dir / "dataset.jsonl");

    auto model = std::make_shared<ModelBundle>(
        make_bundle(cfg_.model, cfg_.members(), derive_seed(cfg_.seed, {kInitTag})));
    model->norm = fit_normalization(split.training);
    model->config_hash = hash_;
    train_model(*model, split, g, rec);
    save_model(*model, dir / "model.json");

    UqContext ctx;
    const std::optional<Scheme> scheme = scheme_of(cfg_.scheme);
    if (scheme) {
      ctx.model = model;
      ctx.scheme = *scheme;
      ctx.pooling = cfg_.gmm.pooling;
      if (*scheme == Scheme::kGmm) {
        Selection sel = fit_latent_gmm(*model, 0, structures_of(split.training), cfg_.gmm.candidates,
                                       derive_seed(cfg_.seed, {kGmmTag, static_cast<std::uint64_t>(g)}),
                                       cfg_.gmm.max_points, EmOptions{.regularization = cfg_.gmm.regularization});
        rec.gmm_k = sel.chosen;
        json gj = gmm_to_json(sel.model);
        gj["selection"] = selection_to_json(sel);
        gj["config_hash"] = hash_;
        write_json_file(dir / "gmm.json", gj);
        ctx.gmm = std::make_shared<GmmModel>(std::move(sel.model));
      }
    }
    evaluate(ctx, *model, split, rec, dir);
    run_stability(ctx, model, g, rec, dir);
    write_json_file(dir / "metrics.json", metrics_to_json(rec));
    if (g == cfg_.generations) return {};

    std::vector<LabeledSample> added = acquire(ctx, split.training, g, dir);
    for (const LabeledSample& s : added) rec.new_energies.push_back(s.energy);
    write_samples(added, dir / "new_samples.jsonl");
    write_json_file(dir / "metrics.json", metrics_to_json(rec));
    return added;
  }

 private:
  void train_model(ModelBundle& model, const Split& split, int g, GenerationRecord& rec) {
    const LossSpec spec = cfg_.resolved_loss();
    const std::uint64_t seed = derive_seed(cfg_.seed, {kTrainTag});
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrainReport> reports;
    if (cfg_.scheme == Acquisition::kEnsemble) {
      reports = train_ensemble(model, split.training, split.validation, spec, cfg_.training, seed,
                               cfg_.threads);
    } else {
      reports.push_back(train(model, 0, split.training, split.validation, spec, cfg_.training, seed));
      if (reports[0].failed) throw NumericError("training failed: " + reports[0].error);
    }
    rec.train_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json rj = json::array();
    for (const TrainReport& r : reports) {
      rec.model_ids.push_back(r.snapshot_id);
      rec.peak_tape_bytes = std::max(rec.peak_tape_bytes, r.peak_tape_bytes);
      rj.push_back(report_to_json(r));
    }
    write_json_file(generation_dir(cfg_.output_dir, g) / "train_reports.json",
                    {{"config_hash", hash_}, {"wall_seconds", rec.train_wall_seconds}, {"members", rj}});
  }

  void evaluate(const UqContext& ctx, const ModelBundle& model, const Split& split,
                GenerationRecord& rec, const fs::path& dir) {
    const bool has_u = static_cast<bool>(ctx.model);
    std::vector<UncertaintyRecord> test_records;
    if (has_u) {
      test_records = evaluate_uncertainty(structures_of(shared_.ladder), ctx);
      write_uncertainty_csv(test_records, dir / "uncertainty.csv");
    }
    const std::vector<PotentialOutput> preds = predictions_for(shared_.ladder, model, test_records);
    double e_err = 0.0, f_err = 0.0, f_count = 0.0;
    for (std::size_t k = 0; k < preds.size(); ++k) {
      e_err += std::abs(preds[k].energy - shared_.ladder[k].energy);
      f_err += (preds[k].forces - shared_.ladder[k].forces).cwiseAbs().sum();
      f_count += static_cast<double>(preds[k].forces.size());
    }
    rec.mae_energy = preds.empty() ? 0.0 : e_err / static_cast<double>(preds.size());
    rec.mae_forces = f_count > 0.0 ? f_err / f_count : 0.0;
    rec.test_pairs = make_eval_pairs(shared_.ladder, test_records, preds, cfg_.metrics.error_mode);
    write_eval_pairs(rec.test_pairs, dir / "eval_pairs.csv");
    if (!has_u || rec.test_pairs.empty()) return;

    const std::vector<LabeledSample>& cal = split.validation.empty() ? split.training : split.validation;
    const std::vector<UncertaintyRecord> cal_records = evaluate_uncertainty(structures_of(cal), ctx);
    const std::vector<EvalPair> cal_pairs =
        make_eval_pairs(cal, cal_records, predictions_for(cal, model, cal_records), cfg_.metrics.error_mode);
    MetricOptions opts;
    opts.error_percentile = cfg_.metrics.error_percentile;
    rec.metrics = evaluate_metrics(cal_pairs, rec.test_pairs, opts);
  }

  void run_stability(const UqContext& ctx, const std::shared_ptr<const ModelBundle>& model, int g,
                     GenerationRecord& rec, const fs::path& dir) {
    std::unique_ptr<ForceField> ff;
    if (model->size() > 1) ff = std::make_unique<EnsembleForceField>(model);
    else ff = std::make_unique<ModelForceField>(model, 0);
    (void)ctx;
    Structure start = oracle_->minimum();
    start.id = "md-start";
    const std::vector<Trajectory> trajs =
        run_md_batch({start}, cfg_.md.trajectories, *ff, cfg_.md.md,
                     derive_seed(cfg_.seed, {kMdTag, static_cast<std::uint64_t>(g)}), cfg_.threads);
    rec.stability = stability_fraction(trajs, cfg_.md.md.dt);
    json per = json::array();
    for (const Trajectory& t : trajs) {
      per.push_back({{"stable_steps", t.stable_steps}, {"failure", t.failure},
                     {"mean_kinetic_temperature", t.mean_kinetic_temperature}});
    }
    json sj = summary_to_json(rec.stability);
    sj["config_hash"] = hash_;
    sj["trajectories"] = per;
    sj["md"] = md_config_to_json(cfg_.md.md);
    write_json_file(dir / "md_summary.json", sj);
    if (cfg_.md.write_frames) {
      for (std::size_t k = 0; k < trajs.size(); ++k) {
        write_extxyz(trajs[k], dir / "trajectories" / ("traj-" + std::to_string(k) + ".extxyz"));
      }
    }
  }

  std::vector<LabeledSample> acquire(const UqContext& ctx, const std::vector<LabeledSample>& training,
                                     int g, const fs::path& dir) {
    const auto gen = static_cast<std::uint64_t>(g);
    const std::size_t want = cfg_.adversarial.samples;
    const std::string prefix = std::string(to_string(cfg_.scheme)) + "-g" + std::to_string(g) + "-";
    std::vector<std::size_t> order(training.size());
    std::iota(order.begin(), order.end(), 0);
    Rng pick(derive_seed(cfg_.seed, {kSeedPickTag, gen}));
    std::shuffle(order.begin(), order.end(), pick);
    std::vector<LabeledSample> added;

    if (cfg_.scheme == Acquisition::kRandom) {
      Rng rng(derive_seed(cfg_.seed, {kRandomTag, gen}));
      std::normal_distribution<double> noise(0.0, cfg_.random.scale);
      for (std::size_t k = 0; k < want; ++k) {
        Structure s = training[order[k % order.size()]].structure;
        for (Eigen::Index i = 0; i < s.positions.size(); ++i) s.positions(i) += noise(rng);
        s.id = prefix + std::to_string(k);
        added.push_back(label(*oracle_, s, "random-gen" + std::to_string(g)));
      }
      return added;
    }

    std::vector<const Structure*> seeds;
    for (std::size_t k = 0; k < cfg_.adversarial.seeds; ++k) {
      seeds.push_back(&training[order[k % order.size()]].structure);
    }
    std::vector<double> energies;
    for (const LabeledSample& s : training) energies.push_back(s.energy);
    const std::vector<AdversarialResult> results = adversarial_batch(
        seeds, ctx, energies, cfg_.adversarial, derive_seed(cfg_.seed, {kAscentTag, gen}), cfg_.threads);
    write_results(results, dir / "adversarial.jsonl");
    const std::vector<std::size_t> chosen = select_batch(results, want, cfg_.adversarial.dedup_threshold);
    for (std::size_t k = 0; k < chosen.size(); ++k) {
      Structure s = results[chosen[k]].structure;
      s.id = prefix + std::to_string(k);
      added.push_back(label(*oracle_, s, "adversarial-gen" + std::to_string(g)));
    }
    return added;
  }

  const ExperimentConfig& cfg_;
  const SharedData& shared_;
  std::string hash_;
  std::unique_ptr<Oracle> oracle_;
};

}  // namespace

std::vector<GenerationRecord> run_al_loop(const ExperimentConfig& cfg, const SharedData* shared) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  fs::create_directories(cfg.output_dir);
  check_run_dir(cfg.output_dir, hash, cfg);
  SharedData owned;
  if (!shared) {
    owned = prepare_data(cfg);
    save_shared(owned, cfg.output_dir / "shared");
    shared = &owned;
  }
  GenerationRunner runner(cfg, *shared, hash);
  std::vector<GenerationRecord> records;
  std::vector<LabeledSample> dataset = shared->initial;
  auto persist = [&] {
    json all = json::array();
    for (const GenerationRecord& r : records) all.push_back(record_to_json(r));
    write_json_file(cfg.output_dir / "records.json", {{"config_hash", hash}, {"records", all}});
  };
  for (int g = 1; g <= cfg.generations; ++g) {
    spdlog::info("[{}] generation {} / {}: {} samples", to_string(cfg.scheme), g, cfg.generations,
                 dataset.size());
    GenerationRecord rec;
    try {
      std::vector<LabeledSample> added = runner.run(g, dataset, rec);
      dataset.insert(dataset.end(), added.begin(), added.end());
      write_json_file(generation_dir(cfg.output_dir, g) / "record.json", record_to_json(rec));
      records.push_back(std::move(rec));
      persist();
    } catch (const std::exception& e) {
      rec.generation = g;
      rec.failed = true;
      rec.error = e.what();
      records.push_back(rec);
      persist();
      spdlog::error("[{}] generation {} failed: {}", to_string(cfg.scheme), g, e.what());
      throw;
    }
  }
  return records;
}

std::vector<GenerationRecord> load_records(const fs::path& run_dir) {
  const json j = read_json_file(run_dir / "records.json");
  std::vector<GenerationRecord> out;
  for (const json& r : j.at("records")) {
    GenerationRecord rec = record_from_json(r);
    const fs::path pairs = generation_dir(run_dir, rec.generation) / "eval_pairs.csv";
    if (fs::exists(pairs)) rec.test_pairs = read_eval_pairs(pairs);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<ComparisonRow> comparison_rows(const std::vector<SchemeRun>& runs,
                                           const std::string& initial_hash) {
  std::vector<ComparisonRow> rows;
  for (const SchemeRun& run : runs) {
    if (run.records.empty()) {
      ComparisonRow row;
      row.scheme = run.scheme;
      row.failed = true;
      row.error = run.error;
      row.initial_hash = initial_hash;
      rows.push_back(row);
      continue;
    }
    for (const GenerationRecord& r : run.records) {
      ComparisonRow row;
      row.scheme = run.scheme;
      row.generation = r.generation;
      row.mae_energy = r.mae_energy;
      row.mae_forces = r.mae_forces;
      if (r.metrics) {
        auto defined = [&](const char* name) {
          return std::find(r.metrics->undefined.begin(), r.metrics->undefined.end(), name) ==
                 r.metrics->undefined.end();
        };
        if (defined("spearman")) row.spearman = r.metrics->spearman;
        if (defined("roc_auc")) row.roc_auc = r.metrics->roc_auc;
        if (defined("miscal_area")) row.miscal_area = r.metrics->miscal_area;
        if (defined("cnll")) row.cnll = r.metrics->cnll;
      }
      row.stable_fraction = r.stability.fraction;
      row.wall_seconds = r.train_wall_seconds;
      row.peak_tape_bytes = r.peak_tape_bytes;
      row.initial_hash = initial_hash;
      row.failed = r.failed;
      row.error = r.error;
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

std::string csv_optional(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s.precision(10);
  s << *v;
  return s.str();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_comparison_csv(const std::vector<ComparisonRow>& rows, const fs::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "scheme,generation,mae_energy,mae_forces,spearman,roc_auc,miscal_area,cnll,stable_fraction,"
         "train_wall_seconds,peak_tape_bytes,initial_hash,failed,error\n";
  for (const ComparisonRow& r : rows) {
    out << to_string(r.scheme) << ',' << r.generation << ',' << r.mae_energy << ',' << r.mae_forces << ','
        << csv_optional(r.spearman) << ',' << csv_optional(r.roc_auc) << ','
        << csv_optional(r.miscal_area) << ',' << csv_optional(r.cnll) << ',' << r.stable_fraction << ','
        << r.wall_seconds << ',' << r.peak_tape_bytes << ',' << r.initial_hash << ','
        << (r.failed ? 1 : 0) << ',' << csv_escape(r.error) << '\n';
  }
  write_text(path, out.str());
}

Comparison compare_schemes(const ExperimentConfig& tmpl, const std::vector<Acquisition>& schemes) {
  if (schemes.empty()) throw ConfigError("compare needs at least one scheme");
  tmpl.validate();
  const SharedData shared = prepare_data(tmpl);
  save_shared(shared, tmpl.output_dir / "shared");
  Comparison c;
  c.runs.resize(schemes.size());
  // Schemes run one after another so recorded training times are not contended.
  for (std::size_t k = 0; k < schemes.size(); ++k) {
    ExperimentConfig cfg = tmpl;
    cfg.scheme = schemes[k];
    cfg.model.head = head_of(schemes[k]);
    cfg.output_dir = tmpl.output_dir / std::string(to_string(schemes[k]));
    SchemeRun& run = c.runs[k];
    run.scheme = schemes[k];
    try {
      run.records = run_al_loop(cfg, &shared);
    } catch (const std::exception& e) {
      run.failed = true;
      run.error = e.what();
      if (fs::exists(cfg.output_dir / "records.json")) {
        try {
          run.records = load_records(cfg.output_dir);
        } catch (const std::exception&) {
          run.records.clear();
        }
      }
    }
  }
  c.rows = comparison_rows(c.runs, shared.initial_hash);
  write_comparison_csv(c.rows, tmpl.output_dir / "comparison.csv");
  return c;
}

std::vector<std::pair<std::string, std::vector<std::string>>> best_per_metric(
    const std::vector<SchemeRun>& runs) {
  int last = std::numeric_limits<int>::max();
  for (const SchemeRun& run : runs) {
    int best_g = 0;
    for (const GenerationRecord& r : run.records) {
      if (!r.failed) best_g = std::max(best_g, r.generation);
    }
    if (best_g > 0) last = std::min(last, best_g);
  }
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  if (last == std::numeric_limits<int>::max()) return out;
  struct Metric {
    const char* name;
    bool higher_better;
    std::function<std::optional<double>(const GenerationRecord&)> get;
  };
  auto uq = [](double MetricReport::*field, const char* key) {
    return [field, key](const GenerationRecord& r) -> std::optional<double> {
      if (!r.metrics) return std::nullopt;
      const auto& u = r.metrics->undefined;
      if (std::find(u.begin(), u.end(), key) != u.end()) return std::nullopt;
      return (*r.metrics).*field;
    };
  };
  const std::vector<Metric> metrics{
      {"mae_energy", false, [](const GenerationRecord& r) { return std::optional<double>(r.mae_energy); }},
      {"mae_forces", false, [](const GenerationRecord& r) { return std::optional<double>(r.mae_forces); }},
      {"spearman", true, uq(&MetricReport::spearman, "spearman")},
      {"roc_auc", true, uq(&MetricReport::roc_auc, "roc_auc")},
      {"miscal_area", false, uq(&MetricReport::miscal_area, "miscal_area")},
      {"cnll", false, uq(&MetricReport::cnll, "cnll")},
      {"stable_fraction", true,
       [](const GenerationRecord& r) { return std::optional<double>(r.stability.fraction); }}};
  for (const Metric& m : metrics) {
    std::optional<double> best;
    std::vector<std::string> winners;
    for (const SchemeRun& run : runs) {
      for (const GenerationRecord& r : run.records) {
        if (r.generation != last || r.failed) continue;
        const std::optional<double> v = m.get(r);
        if (!v) continue;
        const bool better = !best || (m.higher_better ? *v > *best : *v < *best);
        if (better) {
          best = v;
          winners = {std::string(to_string(run.scheme))};
        } else if (*v == *best) {
          winners.emplace_back(to_string(run.scheme));
        }
      }
    }
    out.emplace_back(m.name, winners);
  }
  return out;
}

void emit_report(const std::vector<SchemeRun>& runs, const fs::path& dir, double histogram_width) {
  if (runs.empty()) throw DomainError("emit_report needs at least one run");
  if (!(histogram_width > 0.0)) throw ConfigError("histogram width must be > 0");
  std::ostringstream scatter, metrics, hist, stab, summary;
  for (auto* s : {&scatter, &metrics, &hist, &stab}) s->precision(12);
  scatter << "scheme,generation,structure_id,U,eps\n";
  metrics << "scheme,generation,metric,value\n";
  hist << "scheme,generation,bin_lo,bin_hi,count\n";
  stab << "scheme,generation,stable_fraction,mean_stable_time_fs,trajectories\n";
  for (const SchemeRun& run : runs) {
    const std::string name(to_string(run.scheme));
    for (const GenerationRecord& r : run.records) {
      if (r.failed) continue;
      for (const EvalPair& p : r.test_pairs) {
        scatter << name << ',' << r.generation << ',' << p.structure_id << ',' << p.u << ',' << p.eps << '\n';
      }
      auto metric = [&](const char* key, double v) {
        metrics << name << ',' << r.generation << ',' << key << ',' << v << '\n';
      };
      metric("mae_energy", r.mae_energy);
      metric("mae_forces", r.mae_forces);
      if (r.metrics) {
        auto defined = [&](const char* k) {
          return std::find(r.metrics->undefined.begin(), r.metrics->undefined.end(), k) ==
                 r.metrics->undefined.end();
        };
        if (defined("spearman")) metric("spearman", r.metrics->spearman);
        if (defined("roc_auc")) metric("roc_auc", r.metrics->roc_auc);
        if (defined("miscal_area")) metric("miscal_area", r.metrics->miscal_area);
        if (defined("cnll")) metric("cnll", r.metrics->cnll);
      }
      metric("stable_fraction", r.stability.fraction);
      stab << name << ',' << r.generation << ',' << r.stability.fraction << ','
           << r.stability.mean_stable_time << ',' << r.stability.count << '\n';
      if (!r.new_energies.empty()) {
        const double lo = std::floor(*std::min_element(r.new_energies.begin(), r.new_energies.end()) /
                                     histogram_width) * histogram_width;
        const double hi = *std::max_element(r.new_energies.begin(), r.new_energies.end());
        const auto bins = static_cast<std::size_t>(std::floor((hi - lo) / histogram_width)) + 1;
        std::vector<std::size_t> counts(bins, 0);
        for (double e : r.new_energies) {
          const auto b = std::min(bins - 1, static_cast<std::size_t>(std::floor((e - lo) / histogram_width)));
          ++counts[b];
        }
        for (std::size_t b = 0; b < bins; ++b) {
          hist << name << ',' << r.generation << ',' << lo + static_cast<double>(b) * histogram_width << ','
               << lo + static_cast<double>(b + 1) * histogram_width << ',' << counts[b] << '\n';
        }
      }
    }
  }
  summary << "# Experiment summary\n\n";
  summary << "| scheme | generation | MAE E | MAE F | Spearman | ROC-AUC | miscal. area | cNLL | stable |\n";
  summary << "|---|---|---|---|---|---|---|---|---|\n";
  summary.precision(4);
  for (const ComparisonRow& row : comparison_rows(runs, "")) {
    if (row.failed) {
      summary << "| " << to_string(row.scheme) << " | " << row.generation << " | failed: " << row.error
              << " | | | | | | |\n";
      continue;
    }
    auto opt = [](const std::optional<double>& v) {
      if (!v) return std::string("n/a");
      std::ostringstream s;
      s.precision(4);
      s << *v;
      return s.str();
    };
    summary << "| " << to_string(row.scheme) << " | " << row.generation << " | " << row.mae_energy << " | "
            << row.mae_forces << " | " << opt(row.spearman) << " | " << opt(row.roc_auc) << " | "
            << opt(row.miscal_area) << " | " << opt(row.cnll) << " | " << row.stable_fraction << " |\n";
  }
  summary << "\n## Best scheme per metric (last common generation)\n\n";
  for (const auto& [metric, winners] : best_per_metric(runs)) {
    summary << "- " << metric << ": ";
    if (winners.empty()) summary << "n/a";
    for (std::size_t k = 0; k < winners.size(); ++k) summary << (k ? ", " : "") << winners[k];
    if (winners.size() > 1) summary << " (tie)";
    summary << '\n';
  }
  write_text(dir / "scatter.csv", scatter.str());
  write_text(dir / "metrics.csv", metrics.str());
  write_text(dir / "histograms.csv", hist.str());
  write_text(dir / "stability.csv", stab.str());
  write_text(dir / "summary.md", summary.str());
}

}  // namespace uqlab

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

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "uqlab/common/allocator.hpp"
#include "uqlab/orchestrator/experiment.hpp"
#include "uqlab/potential/serialization.hpp"

namespace fs = std::filesystem;
using namespace uqlab;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::string log_level = "info";
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? config_from_json({{"schema_version", kConfigSchemaVersion}})
                                          : load_config(g.config);
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_dir = *g.out;
  if (g.threads) cfg.threads = *g.threads;
  cfg.validate();
  return cfg;
}

std::vector<const Structure*> structures_of(const std::vector<LabeledSample>& samples) {
  std::vector<const Structure*> out;
  for (const LabeledSample& s : samples) out.push_back(&s.structure);
  return out;
}

std::shared_ptr<const ModelBundle> load_checked_model(const fs::path& path, const ExperimentConfig& cfg,
                                                      bool allow_mismatch) {
  auto model = std::make_shared<ModelBundle>(load_model(path));
  const std::string want = config_hash(cfg);
  if (!allow_mismatch && !model->config_hash.empty() && model->config_hash != want) {
    throw ConfigError(path.string() + " was produced under config hash " + model->config_hash +
                      ", current config hashes to " + want + " (pass --allow-hash-mismatch to override)");
  }
  return model;
}

UqContext make_context(const ExperimentConfig& cfg, std::shared_ptr<const ModelBundle> model,
                       const std::string& gmm_path) {
  const std::optional<Scheme> scheme = scheme_of(cfg.scheme);
  if (!scheme) throw ConfigError("the random scheme has no uncertainty");
  UqContext ctx;
  ctx.model = std::move(model);
  ctx.scheme = *scheme;
  ctx.pooling = cfg.gmm.pooling;
  if (*scheme == Scheme::kGmm) {
    if (gmm_path.empty()) throw ConfigError("the gmm scheme needs --gmm <gmm.json>");
    ctx.gmm = std::make_shared<GmmModel>(gmm_from_json(read_json_file(gmm_path)));
  }
  ctx.validate();
  return ctx;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kDomain: return 2;
    case ErrorKind::kNumeric: return 3;
    case ErrorKind::kIo: return 4;
    case ErrorKind::kInternal: return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  CLI::App app{"uqlab: uncertainty quantification lab for neural network potentials"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the config seed");
  app.add_option("--out", g.out, "Output directory (overrides output_dir)");
  app.add_option("--threads", g.threads, "Worker threads");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
  app.fallthrough();

  auto* show = app.add_subcommand("show-config", "Print the resolved config (defaults filled in)");

  auto* gen = app.add_subcommand("gen-data", "Generate the initial dataset and test ladder");

  auto* train_cmd = app.add_subcommand("train", "Train the configured scheme's model");
  std::string train_data;
  train_cmd->add_option("--data", train_data, "Training samples (JSON-lines); default: generated")
      ->check(CLI::ExistingFile);

  auto* unc = app.add_subcommand("uncertainty", "Per-structure uncertainty and evaluation pairs");
  std::string model_path, data_path, gmm_path;
  bool allow_mismatch = false;
  for (auto* cmd : {unc}) {
    cmd->add_option("--model", model_path, "Model bundle (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--data", data_path, "Samples (JSON-lines)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--gmm", gmm_path, "Fitted GMM (JSON), gmm scheme only");
    cmd->add_flag("--allow-hash-mismatch", allow_mismatch, "Accept artifacts from another config");
  }

  auto* met = app.add_subcommand("metrics", "UQ metrics from an EvalPair CSV");
  std::string pairs_path, validation_path;
  std::optional<double> percentile;
  met->add_option("--pairs", pairs_path, "Test pairs (structure_id,U,eps[,eps_signed...])")
      ->required()
      ->check(CLI::ExistingFile);
  met->add_option("--validation", validation_path, "Calibration pairs; default: the test pairs")
      ->check(CLI::ExistingFile);
  met->add_option("--percentile", percentile, "ROC-AUC error percentile");

  auto* adv = app.add_subcommand("adversarial", "Adversarial sampling from training structures");
  adv->add_option("--model", model_path, "Model bundle (JSON)")->required()->check(CLI::ExistingFile);
  adv->add_option("--data", data_path, "Training samples (JSON-lines)")->required()->check(CLI::ExistingFile);
  adv->add_option("--gmm", gmm_path, "Fitted GMM (JSON), gmm scheme only");
  adv->add_flag("--allow-hash-mismatch", allow_mismatch, "Accept artifacts from another config");

  auto* md = app.add_subcommand("md", "MD stability batch with a trained model");
  md->add_option("--model", model_path, "Model bundle (JSON)")->required()->check(CLI::ExistingFile);
  md->add_flag("--allow-hash-mismatch", allow_mismatch, "Accept artifacts from another config");

  auto* al = app.add_subcommand("al-loop", "Run the generational active-learning loop");

  auto* cmp = app.add_subcommand("compare", "Run the AL loop for several schemes on shared data");
  std::vector<std::string> schemes{"ensemble", "mve", "evidential", "gmm"};
  cmp->add_option("--schemes", schemes, "Schemes to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"ensemble", "mve", "evidential", "gmm", "random"}));

  auto* rep = app.add_subcommand("report", "Emit plot data and a summary from finished runs");
  std::string run_dir;
  double hist_width = 1.0;
  rep->add_option("--run", run_dir, "Directory of an al-loop or compare run")
      ->required()
      ->check(CLI::ExistingDirectory);
  rep->add_option("--histogram-width", hist_width, "Energy histogram bin width (kcal/mol)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(g.log_level));

  try {
    const ExperimentConfig cfg = resolve(g);
    const fs::path out = cfg.output_dir;
    const std::string hash = config_hash(cfg);

    if (*show) {
      nlohmann::json j = config_to_json(cfg);
      j["config_hash"] = hash;
      std::cout << j.dump(2) << '\n';
    } else if (*gen) {
      const SharedData d = prepare_data(cfg);
      save_shared(d, out);
      spdlog::info("wrote {} initial and {} test samples to {}", d.initial.size(), d.ladder.size(),
                   out.string());
    } else if (*train_cmd) {
      std::vector<LabeledSample> data =
          train_data.empty() ? prepare_data(cfg).initial : read_samples(train_data);
      ModelBundle model = make_bundle(cfg.model, cfg.members(), derive_seed(cfg.seed, {11}));
      model.norm = fit_normalization(data);
      model.config_hash = hash;
      const LossSpec spec = cfg.resolved_loss();
      std::vector<TrainReport> reports;
      if (cfg.members() > 1) {
        reports = train_ensemble(model, data, {}, spec, cfg.training, derive_seed(cfg.seed, {12}), cfg.threads);
      } else {
        reports.push_back(train(model, 0, data, {}, spec, cfg.training, derive_seed(cfg.seed, {12})));
        if (reports[0].failed) throw NumericError("training failed: " + reports[0].error);
      }
      save_model(model, out / "model.json");
      nlohmann::json rj = nlohmann::json::array();
      for (const TrainReport& r : reports) rj.push_back(report_to_json(r));
      write_json_file(out / "train_reports.json", {{"config_hash", hash}, {"members", rj}});
      if (cfg.scheme == Acquisition::kGmm) {
        const Selection sel = fit_latent_gmm(model, 0, structures_of(data), cfg.gmm.candidates,
                                             derive_seed(cfg.seed, {13}), cfg.gmm.max_points,
                                             EmOptions{.regularization = cfg.gmm.regularization});
        nlohmann::json gj = gmm_to_json(sel.model);
        gj["selection"] = selection_to_json(sel);
        gj["config_hash"] = hash;
        write_json_file(out / "gmm.json", gj);
      }
      spdlog::info("model written to {}", (out / "model.json").string());
    } else if (*unc) {
      const auto model = load_checked_model(model_path, cfg, allow_mismatch);
      const UqContext ctx = make_context(cfg, model, gmm_path);
      const std::vector<LabeledSample> samples = read_samples(data_path);
      const auto records = evaluate_uncertainty(structures_of(samples), ctx);
      write_uncertainty_csv(records, out / "uncertainty.csv");
      std::vector<PotentialOutput> preds(records.size());
      for (std::size_t k = 0; k < records.size(); ++k) {
        preds[k].energy = records[k].energy;
        preds[k].forces = records[k].forces;
      }
      write_eval_pairs(make_eval_pairs(samples, records, preds, cfg.metrics.error_mode),
                       out / "eval_pairs.csv");
      spdlog::info("wrote {} uncertainty records to {}", records.size(), out.string());
    } else if (*met) {
      const auto test = read_eval_pairs(pairs_path);
      const auto val = validation_path.empty() ? test : read_eval_pairs(validation_path);
      MetricOptions opts;
      opts.error_percentile = percentile.value_or(cfg.metrics.error_percentile);
      const MetricReport r = evaluate_metrics(val, test, opts);
      nlohmann::json j = report_to_json(r);
      j["config"] = {{"error_percentile", opts.error_percentile},
                     {"pairs", pairs_path},
                     {"validation", validation_path.empty() ? pairs_path : validation_path}};
      write_json_file(out / "metrics.json", j);
      std::cout << j.dump(2) << '\n';
    } else if (*adv) {
      const auto model = load_checked_model(model_path, cfg, allow_mismatch);
      const UqContext ctx = make_context(cfg, model, gmm_path);
      const std::vector<LabeledSample> samples = read_samples(data_path);
      std::vector<double> energies;
      std::vector<const Structure*> seeds;
      for (std::size_t k = 0; k < cfg.adversarial.seeds; ++k) {
        seeds.push_back(&samples[k % samples.size()].structure);
      }
      for (const LabeledSample& s : samples) energies.push_back(s.energy);
      const auto results =
          adversarial_batch(seeds, ctx, energies, cfg.adversarial, derive_seed(cfg.seed, {15}), cfg.threads);
      write_results(results, out / "adversarial.jsonl");
      const auto chosen = select_batch(results, cfg.adversarial.samples, cfg.adversarial.dedup_threshold);
      std::vector<AdversarialResult> picked;
      for (std::size_t k : chosen) picked.push_back(results[k]);
      write_results(picked, out / "selected.jsonl");
      spdlog::info("{} ascents, {} selected", results.size(), picked.size());
    } else if (*md) {
      const auto model = load_checked_model(model_path, cfg, allow_mismatch);
      std::unique_ptr<ForceField> ff;
      if (model->size() > 1) ff = std::make_unique<EnsembleForceField>(model);
      else ff = std::make_unique<ModelForceField>(model, 0);
      Structure start = make_oracle(cfg.oracle)->minimum();
      start.id = "md-start";
      const auto trajs = run_md_batch({start}, cfg.md.trajectories, *ff, cfg.md.md,
                                      derive_seed(cfg.seed, {14}), cfg.threads);
      const StabilitySummary s = stability_fraction(trajs, cfg.md.md.dt);
      nlohmann::json j = summary_to_json(s);
      j["config_hash"] = hash;
      write_json_file(out / "md_summary.json", j);
      if (cfg.md.write_frames) {
        for (std::size_t k = 0; k < trajs.size(); ++k) {
          write_extxyz(trajs[k], out / "trajectories" / ("traj-" + std::to_string(k) + ".extxyz"));
        }
      }
      std::cout << j.dump(2) << '\n';
    } else if (*al) {
      const auto records = run_al_loop(cfg);
      emit_report({SchemeRun{cfg.scheme, records, false, ""}}, out / "report");
    } else if (*cmp) {
      std::vector<Acquisition> list;
      for (const std::string& s : schemes) list.push_back(acquisition_from_string(s));
      const Comparison c = compare_schemes(cfg, list);
      emit_report(c.runs, out / "report");
      bool any_failed = false;
      for (const SchemeRun& r : c.runs) any_failed = any_failed || r.failed;
      if (any_failed) spdlog::warn("some schemes failed; see comparison.csv");
    } else if (*rep) {
      std::vector<SchemeRun> runs;
      const fs::path root = run_dir;
      auto add_run = [&](const fs::path& dir) {
        const auto records = load_records(dir);
        if (records.empty()) return;
        runs.push_back({records.front().scheme, records, false, ""});
      };
      if (fs::exists(root / "records.json")) {
        add_run(root);
      } else {
        for (const char* name : {"ensemble", "mve", "evidential", "gmm", "random"}) {
          if (fs::exists(root / name / "records.json")) add_run(root / name);
        }
      }
      if (runs.empty()) throw IoError(root.string() + " holds no records.json");
      emit_report(runs, g.out ? fs::path(*g.out) : root / "report", hist_width);
    }
    (void)gen;
    return 0;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    spdlog::error("malformed JSON: {}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "uqlab/common/error.hpp"
#include "uqlab/orchestrator/experiment.hpp"

namespace uqlab {
namespace {

namespace fs = std::filesystem;

nlohmann::json tiny_json(const std::string& scheme, int generations) {
  return {{"schema_version", 1},
          {"seed", 3},
          {"scheme", scheme},
          {"ensemble_size", 2},
          {"generations", generations},
          {"data", {{"initial_samples", 16}, {"ladder", {{"bins", 6}, {"per_bin", 2}}}}},
          {"model", {{"hidden", {8}}, {"latent_dim", 4}}},
          {"gmm", {{"candidates", {1, 2}}}},
          {"training", {{"epochs", 15}}},
          {"adversarial", {{"seeds", 5}, {"steps", 4}, {"samples", 3}}},
          {"md", {{"steps", 60}, {"trajectories", 2}}}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("uqlab_orch_" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentConfig tiny(const std::string& scheme, int generations, const std::string& dir) {
  ExperimentConfig c = config_from_json(tiny_json(scheme, generations));
  c.output_dir = fresh_dir(dir);
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(Config, RoundTripIsStable) {
  const ExperimentConfig a = config_from_json(tiny_json("gmm", 2));
  const nlohmann::json j = config_to_json(a);
  const ExperimentConfig b = config_from_json(j);
  EXPECT_EQ(config_to_json(b), j);
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(b.scheme, Acquisition::kGmm);
  EXPECT_EQ(b.model.head, HeadType::kStandard);
}

TEST(Config, HashIgnoresOutputAndThreads) {
  ExperimentConfig a = config_from_json(tiny_json("ensemble", 2));
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.threads = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 4;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, StrictKeys) {
  nlohmann::json j = tiny_json("ensemble", 1);
  j["trainng"] = {{"epochs", 3}};
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_json("ensemble", 1);
  j["training"]["epohcs"] = 3;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_json("ensemble", 1);
  j["schema_version"] = kConfigSchemaVersion + 1;
  EXPECT_THROW(config_from_json(j), ConfigError);
  j.erase("schema_version");
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_json("bayesian", 1);
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(Config, InvalidValuesRejected) {
  nlohmann::json j = tiny_json("ensemble", 0);
  EXPECT_THROW(config_from_json(j), ConfigError);
  j = tiny_json("ensemble", 1);
  j["ensemble_size"] = 1;
  EXPECT_THROW(config_from_json(j), ConfigError);
}

TEST(AlLoop, SingleGenerationAddsNothing) {
  const ExperimentConfig cfg = tiny("mve", 1, "g1");
  const auto records = run_al_loop(cfg);
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].manifest.size(), 16u);
  for (const ManifestEntry& e : records[0].manifest) {
    EXPECT_EQ(e.provenance.rfind("adversarial", 0), std::string::npos) << e.id;
  }
  EXPECT_TRUE(records[0].new_energies.empty());
  EXPECT_TRUE(records[0].metrics.has_value());
  EXPECT_TRUE(fs::exists(cfg.output_dir / "gen-1" / "metrics.json"));
  EXPECT_FALSE(fs::exists(cfg.output_dir / "gen-1" / "adversarial.jsonl"));
}

TEST(AlLoop, ManifestGrowsAndTestSetStaysIsolated) {
  const ExperimentConfig cfg = tiny("ensemble", 3, "g3");
  const SharedData shared = prepare_data(cfg);
  const auto records = run_al_loop(cfg, &shared);
  ASSERT_EQ(records.size(), 3u);
  std::set<std::string> ladder;
  for (const LabeledSample& s : shared.ladder) ladder.insert(s.structure.id);
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_EQ(records[g].manifest.size(), 16u + 3u * g);
    std::set<std::string> ids;
    for (const ManifestEntry& e : records[g].manifest) {
      EXPECT_TRUE(ids.insert(e.id).second) << "duplicate " << e.id;
      EXPECT_EQ(ladder.count(e.id), 0u) << e.id;
    }
    EXPECT_EQ(records[g].training_ids.size() + records[g].validation_ids.size(),
              records[g].manifest.size());
  }
  std::size_t adversarial = 0;
  for (const ManifestEntry& e : records[2].manifest) {
    if (e.provenance.rfind("adversarial-gen", 0) == 0) ++adversarial;
  }
  EXPECT_EQ(adversarial, 6u);
  EXPECT_EQ(records[0].new_energies.size(), 3u);
  EXPECT_TRUE(records[2].new_energies.empty());

  const auto loaded = load_records(cfg.output_dir);
  ASSERT_EQ(loaded.size(), 3u);
  for (std::size_t g = 0; g < 3; ++g) {
    EXPECT_EQ(metrics_to_json(loaded[g]), metrics_to_json(records[g]));
  }
}

TEST(AlLoop, RepeatedRunsAreByteIdentical) {
  const ExperimentConfig a = tiny("gmm", 2, "det_a");
  const ExperimentConfig b = tiny("gmm", 2, "det_b");
  run_al_loop(a);
  run_al_loop(b);
  for (const char* gen : {"gen-1", "gen-2"}) {
    for (const char* file : {"manifest.json", "metrics.json", "dataset.jsonl"}) {
      const std::string x = slurp(a.output_dir / gen / file);
      EXPECT_FALSE(x.empty()) << gen << '/' << file;
      EXPECT_EQ(x, slurp(b.output_dir / gen / file)) << gen << '/' << file;
    }
  }
}

TEST(AlLoop, RefusesRunDirectoryOfOtherConfig) {
  ExperimentConfig cfg = tiny("random", 1, "mismatch");
  run_al_loop(cfg);
  cfg.seed = 99;
  EXPECT_THROW(run_al_loop(cfg), ConfigError);
}

TEST(AlLoop, RandomBaselineHasNoMetrics) {
  const ExperimentConfig cfg = tiny("random", 2, "random");
  const auto records = run_al_loop(cfg);
  ASSERT_EQ(records.size(), 2u);
  EXPECT_FALSE(records[0].metrics.has_value());
  std::size_t random = 0;
  for (const ManifestEntry& e : records[1].manifest) {
    if (e.provenance == "random-gen1") ++random;
  }
  EXPECT_EQ(random, 3u);
}

TEST(Compare, SchemesShareInitialData) {
  ExperimentConfig cfg = tiny("ensemble", 1, "compare");
  const Comparison c = compare_schemes(cfg, {Acquisition::kEnsemble, Acquisition::kEvidential});
  ASSERT_EQ(c.runs.size(), 2u);
  ASSERT_EQ(c.rows.size(), 2u);
  EXPECT_FALSE(c.rows[0].initial_hash.empty());
  EXPECT_EQ(c.rows[0].initial_hash, c.rows[1].initial_hash);
  EXPECT_EQ(slurp(cfg.output_dir / "ensemble" / "gen-1" / "dataset.jsonl"),
            slurp(cfg.output_dir / "evidential" / "gen-1" / "dataset.jsonl"));
  EXPECT_TRUE(fs::exists(cfg.output_dir / "comparison.csv"));
}

GenerationRecord synthetic(int generation, double mae, double spearman) {
  GenerationRecord r;
  r.generation = generation;
  r.mae_energy = mae;
  r.mae_forces = mae;
  MetricReport m;
  m.spearman = spearman;
  m.roc_auc = 0.5;
  m.miscal_area = 0.1;
  m.cnll = 1.0;
  r.metrics = m;
  r.stability.fraction = 0.5;
  return r;
}

TEST(Report, TiesListEveryWinner) {
  std::vector<SchemeRun> runs(2);
  runs[0].scheme = Acquisition::kEnsemble;
  runs[1].scheme = Acquisition::kGmm;
  runs[0].records = {synthetic(1, 1.0, 0.3), synthetic(2, 0.5, 0.4)};
  runs[1].records = {synthetic(1, 1.0, 0.9), synthetic(2, 0.5, 0.2)};
  const auto best = best_per_metric(runs);
  auto winners = [&](const std::string& metric) {
    for (const auto& [name, w] : best) {
      if (name == metric) return w;
    }
    return std::vector<std::string>{};
  };
  EXPECT_EQ(winners("mae_energy"), (std::vector<std::string>{"ensemble", "gmm"}));
  EXPECT_EQ(winners("spearman"), (std::vector<std::string>{"ensemble"}));

  const fs::path dir = fresh_dir("report");
  fs::create_directories(dir);
  emit_report(runs, dir);
  const std::string summary = slurp(dir / "summary.md");
  EXPECT_NE(summary.find("mae_energy: ensemble, gmm (tie)"), std::string::npos) << summary;
  EXPECT_NE(summary.find("spearman: ensemble\n"), std::string::npos) << summary;
}

TEST(Report, HistogramBinsAreHalfOpen) {
  std::vector<SchemeRun> runs(1);
  runs[0].scheme = Acquisition::kMve;
  GenerationRecord r = synthetic(1, 1.0, 0.5);
  r.new_energies = {0.0, 0.999, 1.0, 2.0, 2.5};
  runs[0].records = {r};
  const fs::path dir = fresh_dir("hist");
  fs::create_directories(dir);
  emit_report(runs, dir, 1.0);
  EXPECT_EQ(slurp(dir / "histograms.csv"),
            "scheme,generation,bin_lo,bin_hi,count\n"
            "mve,1,0,1,2\n"
            "mve,1,1,2,1\n"
            "mve,1,2,3,2\n");
  EXPECT_THROW(emit_report(runs, dir, 0.0), ConfigError);
}

}  // namespace
}  // namespace uqlab

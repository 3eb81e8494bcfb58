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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqlab/orchestrator/config.hpp"

namespace uqlab {

// Initial training data and the fixed test ladder, shared by every scheme.
struct SharedData {
  std::vector<LabeledSample> initial;
  std::vector<LabeledSample> ladder;
  std::size_t ladder_shortfall = 0;
  std::string initial_hash;  // SHA-256 of the initial JSON-lines text
};

SharedData prepare_data(const ExperimentConfig& cfg);
void save_shared(const SharedData& d, const std::filesystem::path& dir);
SharedData load_shared(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string id;
  std::string provenance;
};

struct GenerationRecord {
  int generation = 0;
  Acquisition scheme = Acquisition::kEnsemble;
  std::string config_hash;
  std::vector<ManifestEntry> manifest;   // cumulative dataset
  std::vector<std::string> training_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> model_ids;
  double mae_energy = 0.0;
  double mae_forces = 0.0;
  std::optional<MetricReport> metrics;   // absent for the random baseline
  std::optional<int> gmm_k;
  StabilitySummary stability;
  std::vector<double> new_energies;      // oracle energies of samples added after this generation
  double train_wall_seconds = 0.0;
  std::size_t peak_tape_bytes = 0;
  std::vector<EvalPair> test_pairs;      // persisted as CSV, not in the JSON
  bool failed = false;
  std::string error;
};

nlohmann::json manifest_to_json(const GenerationRecord& r);
// Everything that must be reproducible; no timings.
nlohmann::json metrics_to_json(const GenerationRecord& r);
nlohmann::json record_to_json(const GenerationRecord& r);
GenerationRecord record_from_json(const nlohmann::json& j);

// Builds evaluation pairs for `samples` from uncertainty records in the same
// order (U = 0 when `records` is empty).
std::vector<EvalPair> make_eval_pairs(const std::vector<LabeledSample>& samples,
                                      const std::vector<UncertaintyRecord>& records,
                                      const std::vector<PotentialOutput>& predictions,
                                      ErrorMode mode);

// Runs the generational loop into cfg.output_dir. `shared` defaults to data
// generated from the config. Every generation is persisted before the next
// starts; a failing stage is recorded and rethrown.
std::vector<GenerationRecord> run_al_loop(const ExperimentConfig& cfg,
                                          const SharedData* shared = nullptr);

std::vector<GenerationRecord> load_records(const std::filesystem::path& run_dir);

struct ComparisonRow {
  Acquisition scheme = Acquisition::kEnsemble;
  int generation = 0;
  double mae_energy = 0.0;
  double mae_forces = 0.0;
  std::optional<double> spearman;
  std::optional<double> roc_auc;
  std::optional<double> miscal_area;
  std::optional<double> cnll;
  double stable_fraction = 0.0;
  double wall_seconds = 0.0;
  std::size_t peak_tape_bytes = 0;
  std::string initial_hash;
  bool failed = false;
  std::string error;
};

struct SchemeRun {
  Acquisition scheme = Acquisition::kEnsemble;
  std::vector<GenerationRecord> records;
  bool failed = false;
  std::string error;
};

struct Comparison {
  std::vector<SchemeRun> runs;
  std::vector<ComparisonRow> rows;
};

// One AL loop per scheme in <output_dir>/<scheme>, all sharing the initial
// data and test ladder in <output_dir>/shared. Failures stay per scheme.
Comparison compare_schemes(const ExperimentConfig& tmpl, const std::vector<Acquisition>& schemes);

std::vector<ComparisonRow> comparison_rows(const std::vector<SchemeRun>& runs,
                                           const std::string& initial_hash);
void write_comparison_csv(const std::vector<ComparisonRow>& rows, const std::filesystem::path& path);

// Writes scatter.csv, metrics.csv, histograms.csv, stability.csv and
// summary.md into `dir`.
void emit_report(const std::vector<SchemeRun>& runs, const std::filesystem::path& dir,
                 double histogram_width = 1.0);

// Best scheme per metric at the last common generation; ties list every
// winner.
std::vector<std::pair<std::string, std::vector<std::string>>> best_per_metric(
    const std::vector<SchemeRun>& runs);

}  // namespace uqlab

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

#include <cstdio>
#include <exception>
#include <functional>
#include <set>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "acceptance.hpp"
#include "uqlab/common/allocator.hpp"

namespace {

using namespace uqlab::acceptance;

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Context&)> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "metric oracle equivalence", metric_oracle_equivalence},
      {2, "gradient suite", gradient_suite},
      {3, "closed-form examples", closed_form_examples},
      {4, "EM monotonicity and recovery", em_monotonicity_and_recovery},
      {5, "calibration soundness", calibration_soundness},
      {6, "integrator", integrator},
      {7, "directional active learning", directional_active_learning},
      {8, "ensemble averaging", ensemble_averaging},
      {9, "cost accounting", cost_accounting},
      {10, "end-to-end determinism", end_to_end_determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  uqlab::configure_allocator();
  CLI::App app{"uqlab acceptance suite"};
  std::vector<int> only;
  std::string work = "acceptance-work";
  std::string log_level = "warn";
  app.add_option("--criterion", only, "Criteria to run (repeatable; default all)")
      ->check(CLI::Range(1, 10));
  app.add_option("--work", work, "Scratch directory for experiment runs");
  app.add_option("--log-level", log_level, "Library log level")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  const std::set<int> wanted(only.begin(), only.end());
  Context ctx{work};
  int failures = 0;
  for (const Criterion& c : criteria()) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}

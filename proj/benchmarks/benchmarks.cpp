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

#include <random>

#include <benchmark/benchmark.h>

#include "uqlab/common/allocator.hpp"
#include "uqlab/orchestrator/config.hpp"

namespace uqlab {
namespace {

ExperimentConfig bench_config(const char* scheme) {
  return config_from_json({{"schema_version", 1}, {"seed", 1}, {"scheme", scheme}});
}

const std::vector<LabeledSample>& samples() {
  static const std::vector<LabeledSample> data = [] {
    const ExperimentConfig cfg = bench_config("ensemble");
    return generate_initial_dataset(*make_oracle(cfg.oracle), 78, 200.0, 1);
  }();
  return data;
}

std::shared_ptr<ModelBundle> bundle(const char* scheme) {
  const ExperimentConfig cfg = bench_config(scheme);
  auto m = std::make_shared<ModelBundle>(make_bundle(cfg.model, cfg.members(), 3));
  m->norm = fit_normalization(samples());
  return m;
}

void BM_TapeSecondOrder(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  diff::Matrix x0(n, 3), w(3, 16);
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = g(rng);
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = g(rng);
  for (auto _ : state) {
    diff::Tape tape;
    diff::Var x = tape.variable(x0);
    diff::Var e = sum(tanh(matmul(x, tape.constant(w))));
    diff::Var f = tape.grad_graph(e, std::vector<diff::Var>{x})[0];
    diff::Matrix gx = tape.grad(sum(square(f)), std::vector<diff::Var>{x})[0];
    benchmark::DoNotOptimize(gx.data());
  }
}
BENCHMARK(BM_TapeSecondOrder)->Arg(4)->Arg(64)->Arg(1024);

void BM_Featurize(benchmark::State& state) {
  const ExperimentConfig cfg = bench_config("ensemble");
  const Structure& s = samples().front().structure;
  for (auto _ : state) benchmark::DoNotOptimize(featurize(s, cfg.model.descriptor).data());
}
BENCHMARK(BM_Featurize);

void BM_PredictMember(benchmark::State& state) {
  const auto m = bundle("ensemble");
  const Structure& s = samples().front().structure;
  for (auto _ : state) benchmark::DoNotOptimize(predict(s, *m, 0).energy);
}
BENCHMARK(BM_PredictMember);

void BM_EnsembleUncertainty(benchmark::State& state) {
  UqContext ctx;
  ctx.model = bundle("ensemble");
  const std::vector<const Structure*> one{&samples().front().structure};
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_uncertainty(one, ctx).front().u);
}
BENCHMARK(BM_EnsembleUncertainty);

void BM_TrainEpoch(benchmark::State& state) {
  const ExperimentConfig cfg = bench_config("ensemble");
  TrainHyper hp = cfg.training;
  hp.epochs = 1;
  hp.patience = 0;
  for (auto _ : state) {
    state.PauseTiming();
    ModelBundle m = make_bundle(cfg.model, 1, 3);
    m.norm = fit_normalization(samples());
    state.ResumeTiming();
    benchmark::DoNotOptimize(train(m, 0, samples(), {}, cfg.resolved_loss(), hp, 1).train_loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(samples().size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_MdSteps(benchmark::State& state) {
  const auto m = bundle("ensemble");
  const ExperimentConfig cfg = bench_config("ensemble");
  const ModelForceField single(m, 0);
  const EnsembleForceField mean(m);
  const ForceField& ff = state.range(0) == 0 ? static_cast<const ForceField&>(single) : mean;
  MDConfig md = cfg.md.md;
  md.steps = 100;
  md.rules = StabilityRules::preset("none");
  const Structure start = make_oracle(cfg.oracle)->minimum();
  for (auto _ : state) benchmark::DoNotOptimize(run_md(start, std::nullopt, ff, md, 1).stable_steps);
  state.SetItemsProcessed(state.iterations() * md.steps);
}
BENCHMARK(BM_MdSteps)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_AdversarialAscent(benchmark::State& state) {
  UqContext ctx;
  ctx.model = bundle("ensemble");
  std::vector<double> energies;
  for (const LabeledSample& s : samples()) energies.push_back(s.energy);
  AdversarialConfig cfg;
  cfg.steps = 20;
  const ObjectiveBuilder builder = model_objective(ctx, energies, cfg.temperature);
  for (auto _ : state) {
    benchmark::DoNotOptimize(adversarial_ascend(samples().front().structure, builder, true, cfg, 1).objective);
  }
}
BENCHMARK(BM_AdversarialAscent)->Unit(benchmark::kMillisecond);

void BM_EmFit(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Eigen::MatrixXd p(1000, 8);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index c = 0; c < p.cols(); ++c) p(i, c) = g(rng) + (i % 3) * 4.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(em_fit(p, static_cast<int>(state.range(0)), 1).loglik);
}
BENCHMARK(BM_EmFit)->Arg(1)->Arg(3)->Arg(6)->Unit(benchmark::kMillisecond);

void BM_Metrics(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> u(n), err(n), abs_err(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = std::exp(g(rng));
    err[i] = g(rng) * std::sqrt(u[i]);
    abs_err[i] = std::abs(err[i]);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(spearman(u, abs_err));
    benchmark::DoNotOptimize(roc_auc(u, abs_err));
    benchmark::DoNotOptimize(miscalibration_area(u, err));
  }
}
BENCHMARK(BM_Metrics)->Arg(1000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Calibrate(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  std::vector<double> u(10000), err(10000);
  for (std::size_t i = 0; i < u.size(); ++i) {
    u[i] = std::exp(g(rng));
    err[i] = g(rng) * std::sqrt(2.0 * u[i] + 0.1);
  }
  for (auto _ : state) benchmark::DoNotOptimize(calibrate(u, err).a);
}
BENCHMARK(BM_Calibrate)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace uqlab

int main(int argc, char** argv) {
  uqlab::configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}

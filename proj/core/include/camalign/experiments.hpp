#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "camalign/dataset.hpp"
#include "camalign/eval.hpp"
#include "camalign/trainer.hpp"

namespace camalign {

/// Training split without identities and an identity-disjoint test split
/// rendered under the same camera shifts.
struct Benchmark {
  Dataset train;
  Dataset test;
};

Benchmark make_synthetic_benchmark(const SynthConfig& config, int test_identities);

/// One training configuration of an experiment table.
struct CellSpec {
  std::string name;
  TrainConfig train;
  double fragment_rate = 0.0;
};

struct ExperimentOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  bool use_groups = false;
  ProbeOptions probe;
};

struct CellResult {
  std::string name;
  std::uint64_t seed = 0;
  double rank1 = 0.0;
  double rank5 = 0.0;
  double rank20 = 0.0;
  double map = 0.0;
  double probe_accuracy = 0.0;
  int skipped_queries = 0;
  bool diverged = false;
  std::string error;
};

struct EvaluationSummary {
  RankingResult ranking;
  ProbeResult probe;
};

/// Ranks every test tracklet against all others and probes the camera
/// information left in the test embeddings.
EvaluationSummary evaluate(const Model& model, const Dataset& test, const ProbeOptions& probe = {});

/// Labels the training split with the seed, optionally fragments it, trains
/// with `seed` and evaluates on the test split. Divergence is recorded, not
/// thrown.
CellResult run_cell(const Benchmark& benchmark, const CellSpec& spec, std::uint64_t seed,
                    const ExperimentOptions& options);

struct TableRow {
  CellSpec spec;
  std::vector<CellResult> runs;
  /// Medians over the non-diverged runs.
  CellResult median;
  int diverged = 0;
};

using ProgressCallback = std::function<void(const CellResult&)>;

std::vector<TableRow> run_grid(const Benchmark& benchmark, const std::vector<CellSpec>& cells,
                               const ExperimentOptions& options, const ProgressCallback& progress = {});

/// Baseline, L_a, L_m, then L_mp for every K.
std::vector<CellSpec> ablation_cells(const TrainConfig& base, const std::vector<int>& k_values);
/// Baseline and L_mp(K=1) at every fragment rate.
std::vector<CellSpec> robustness_cells(const TrainConfig& base, const std::vector<double>& rates);
/// L_mp(K=1) under each camera grouping, coarsest last.
std::vector<CellSpec> grouping_cells(const TrainConfig& base,
                                     const std::vector<std::vector<std::vector<int>>>& groupings);
/// Adaptive and strict-stripe L_mp for every K.
std::vector<CellSpec> k_sweep_cells(const TrainConfig& base, const std::vector<int>& k_values);

std::vector<TableRow> run_ablation(const Benchmark& benchmark, const TrainConfig& base,
                                   const std::vector<int>& k_values, const ExperimentOptions& options,
                                   const ProgressCallback& progress = {});
std::vector<TableRow> run_robustness(const Benchmark& benchmark, const TrainConfig& base,
                                     const std::vector<double>& rates, const ExperimentOptions& options,
                                     const ProgressCallback& progress = {});

/// Groupings {singletons}, {pairs of consecutive cameras}, ..., {all}: every
/// group size that divides the camera count.
std::vector<std::vector<std::vector<int>>> nested_groupings(int cameras);

/// Columns: cell,variant,k,mode,groups,rate,seeds,diverged,rank1,rank5,rank20,map,probe.
/// Metrics are medians in percent (probe as a fraction).
void write_table_csv(const std::vector<TableRow>& rows, const std::filesystem::path& path);
/// One line per (cell, seed).
void write_runs_csv(const std::vector<TableRow>& rows, const std::filesystem::path& path);

/// Small, fast settings used by the acceptance suite and the default CLI run.
TrainConfig desk_train_config();

double median(std::vector<double> values);

}  // namespace camalign

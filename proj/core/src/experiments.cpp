#include "camalign/experiments.hpp"

#include <algorithm>
#include <fstream>

#include "camalign/config.hpp"

namespace camalign {

Benchmark make_synthetic_benchmark(const SynthConfig& config, int test_identities) {
  if (test_identities < 1) throw ConfigError("benchmark needs at least one test identity");
  Benchmark b;
  b.train = generate_synthetic(config);
  SynthConfig test = config;
  test.first_identity = config.first_identity + config.n_identities;
  test.n_identities = test_identities;
  test.presence.clear();
  test.shifts = camera_shifts(config);
  b.test = generate_synthetic(test);
  return b;
}

EvaluationSummary evaluate(const Model& model, const Dataset& test, const ProbeOptions& probe) {
  EvaluationSummary s;
  const LabeledEmbeddings e = embed_dataset(model, test);
  s.ranking = rank_queries(e, e);
  s.probe = domain_probe(e.embeddings, e.cameras, e.n_cameras, probe);
  return s;
}

CellResult run_cell(const Benchmark& benchmark, const CellSpec& spec, std::uint64_t seed,
                    const ExperimentOptions& options) {
  CellResult r;
  r.name = spec.name;
  r.seed = seed;
  Dataset data = benchmark.train;
  assign_pseudo_labels(data.tracklets, derive_seed(seed, "labels"), options.use_groups);
  if (spec.fragment_rate > 0.0) data = fragment_ids(data, spec.fragment_rate, derive_seed(seed, "fragment"));
  TrainConfig config = spec.train;
  config.seed = seed;
  try {
    const TrainResult trained = train(data.tracklets, config);
    const EvaluationSummary s = evaluate(trained.model, benchmark.test, options.probe);
    r.rank1 = 100.0 * s.ranking.rank(1);
    r.rank5 = 100.0 * s.ranking.rank(5);
    r.rank20 = 100.0 * s.ranking.rank(20);
    r.map = 100.0 * s.ranking.map;
    r.probe_accuracy = s.probe.accuracy;
    r.skipped_queries = s.ranking.skipped;
  } catch (const DivergenceError& e) {
    r.diverged = true;
    r.error = e.what();
  }
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<TableRow> run_grid(const Benchmark& benchmark, const std::vector<CellSpec>& cells,
                               const ExperimentOptions& options, const ProgressCallback& progress) {
  std::vector<TableRow> rows;
  for (const auto& spec : cells) {
    TableRow row;
    row.spec = spec;
    std::vector<double> r1, r5, r20, map, probe;
    for (std::uint64_t seed : options.seeds) {
      CellResult r = run_cell(benchmark, spec, seed, options);
      if (progress) progress(r);
      if (r.diverged) {
        ++row.diverged;
      } else {
        r1.push_back(r.rank1);
        r5.push_back(r.rank5);
        r20.push_back(r.rank20);
        map.push_back(r.map);
        probe.push_back(r.probe_accuracy);
      }
      row.runs.push_back(std::move(r));
    }
    row.median.name = spec.name;
    row.median.rank1 = median(r1);
    row.median.rank5 = median(r5);
    row.median.rank20 = median(r20);
    row.median.map = median(map);
    row.median.probe_accuracy = median(probe);
    row.median.diverged = row.diverged == static_cast<int>(options.seeds.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

CellSpec make_cell(const std::string& name, const TrainConfig& base, Variant variant, int k) {
  CellSpec c{name, base, 0.0};
  c.train.adversarial.variant = variant;
  c.train.adversarial.parts = k;
  c.train.adversarial.groups.clear();
  return c;
}

}  // namespace

std::vector<CellSpec> ablation_cells(const TrainConfig& base, const std::vector<int>& k_values) {
  std::vector<CellSpec> cells{
      make_cell("L_id", base, Variant::none, base.adversarial.parts),
      make_cell("L_id+L_a", base, Variant::pairwise, base.adversarial.parts),
      make_cell("L_id+L_m", base, Variant::single, base.adversarial.parts),
  };
  for (int k : k_values) {
    auto c = make_cell("L_id+L_mp(K=" + std::to_string(k) + ")", base, Variant::single_pam, k);
    c.train.adversarial.mask_mode = MaskMode::adaptive;
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<CellSpec> robustness_cells(const TrainConfig& base, const std::vector<double>& rates) {
  std::vector<CellSpec> cells;
  for (const auto& [name, variant] : {std::pair{"Baseline", Variant::none},
                                      std::pair{"PADAL_mp(K=1)", Variant::single_pam}}) {
    for (double rate : rates) {
      auto c = make_cell(std::string(name) + "@" + format_double(rate), base, variant, 1);
      c.fragment_rate = rate;
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<CellSpec> grouping_cells(const TrainConfig& base,
                                     const std::vector<std::vector<std::vector<int>>>& groupings) {
  std::vector<CellSpec> cells;
  for (const auto& groups : groupings) {
    const std::size_t size = groups.empty() ? 0 : groups.front().size();
    auto c = make_cell(std::to_string(size) + "-domains x " + std::to_string(groups.size()), base,
                       Variant::single_pam, 1);
    c.train.adversarial.groups = groups;
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<CellSpec> k_sweep_cells(const TrainConfig& base, const std::vector<int>& k_values) {
  std::vector<CellSpec> cells;
  for (MaskMode mode : {MaskMode::adaptive, MaskMode::strict_stripes}) {
    for (int k : k_values) {
      auto c = make_cell(to_string(mode) + "(K=" + std::to_string(k) + ")", base, Variant::single_pam, k);
      c.train.adversarial.mask_mode = mode;
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

std::vector<TableRow> run_ablation(const Benchmark& benchmark, const TrainConfig& base,
                                   const std::vector<int>& k_values, const ExperimentOptions& options,
                                   const ProgressCallback& progress) {
  return run_grid(benchmark, ablation_cells(base, k_values), options, progress);
}

std::vector<TableRow> run_robustness(const Benchmark& benchmark, const TrainConfig& base,
                                     const std::vector<double>& rates, const ExperimentOptions& options,
                                     const ProgressCallback& progress) {
  return run_grid(benchmark, robustness_cells(base, rates), options, progress);
}

std::vector<std::vector<std::vector<int>>> nested_groupings(int cameras) {
  std::vector<std::vector<std::vector<int>>> out;
  for (int size = 1; size <= cameras; ++size) {
    if (cameras % size != 0) continue;
    std::vector<std::vector<int>> groups;
    for (int start = 0; start < cameras; start += size) {
      std::vector<int> g;
      for (int c = start; c < start + size; ++c) g.push_back(c);
      groups.push_back(std::move(g));
    }
    out.push_back(std::move(groups));
  }
  return out;
}

void write_table_csv(const std::vector<TableRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "cell,variant,k,mode,groups,rate,seeds,diverged,rank1,rank5,rank20,map,probe\n";
  for (const auto& row : rows) {
    const auto& a = row.spec.train.adversarial;
    const auto& m = row.median;
    out << row.spec.name << ',' << to_string(a.variant) << ',' << (uses_parts(a.variant) ? a.parts : 0) << ','
        << to_string(a.mask_mode) << ",\"" << format_groups(a.groups) << "\"," << format_double(row.spec.fragment_rate)
        << ',' << row.runs.size() << ',' << row.diverged << ',' << format_double(m.rank1) << ','
        << format_double(m.rank5) << ',' << format_double(m.rank20) << ',' << format_double(m.map) << ','
        << format_double(m.probe_accuracy) << '\n';
  }
}

void write_runs_csv(const std::vector<TableRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "cell,seed,diverged,rank1,rank5,rank20,map,probe,skipped\n";
  for (const auto& row : rows) {
    for (const auto& r : row.runs) {
      out << r.name << ',' << r.seed << ',' << (r.diverged ? 1 : 0) << ',' << format_double(r.rank1) << ','
          << format_double(r.rank5) << ',' << format_double(r.rank20) << ',' << format_double(r.map) << ','
          << format_double(r.probe_accuracy) << ',' << r.skipped_queries << '\n';
    }
  }
}

TrainConfig desk_train_config() {
  TrainConfig c;
  c.backbone.channels = {16, 32, 32, 32};
  c.adversarial.discriminator.hidden1 = 16;
  c.adversarial.discriminator.hidden2 = 8;
  c.adversarial.normalize_by_area = true;
  c.lambda = 0.02;
  c.batch_size = 16;
  c.frames_per_sample = 2;
  c.steps = 600;
  c.learning_rate = 0.002;
  c.weight_decay = 0.0;
  c.adam_beta1 = 0.5;
  c.lr_decay_interval = 1000;
  return c;
}

}  // namespace camalign

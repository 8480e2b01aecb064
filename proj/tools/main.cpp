// camalign command-line driver: dataset synthesis, training, evaluation,
// experiment tables, feature export and plots.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "camalign/checkpoint.hpp"
#include "camalign/config.hpp"
#include "camalign/experiments.hpp"
#include "camalign/plot.hpp"
#include "camalign/rng.hpp"

namespace fs = std::filesystem;
using namespace camalign;

namespace {

constexpr const char* kOutputRootVariable = "CAMALIGN_OUTPUT_ROOT";

/// Pulls `--section.key=value` and `--section.key value` out of argv.
std::vector<std::string> extract_overrides(int argc, char** argv, Settings& overrides) {
  std::vector<std::string> rest;
  for (int i = 0; i < argc; ++i) {
    const std::string arg = argv[i];
    if (i == 0 || arg.rfind("--", 0) != 0) {
      rest.push_back(arg);
      continue;
    }
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    const std::string key = body.substr(0, eq);
    if (key.find('.') == std::string::npos) {
      rest.push_back(arg);
      continue;
    }
    if (eq != std::string::npos) {
      overrides.set(key, body.substr(eq + 1));
    } else if (i + 1 < argc) {
      overrides.set(key, argv[++i]);
    } else {
      throw ConfigError("--" + key + ": missing value");
    }
  }
  return rest;
}

Settings default_settings() {
  Settings s;
  store(s, SynthConfig{});
  store(s, desk_train_config());
  LoadOptions load;
  load.height = SynthConfig{}.height;
  load.width = SynthConfig{}.width;
  store(s, load);
  s.set("data.use_groups", "false");
  s.set("eval.bins", "30");
  s.set("eval.k_values", "1,2,3,4,5");
  s.set("eval.pca", "true");
  s.set("eval.probe_seed", std::to_string(ProbeOptions{}.seed));
  s.set("eval.rates", "0,10,30,50");
  s.set("eval.seeds", "1,2,3,4,5");
  s.set("eval.test_identities", "40");
  return s;
}

struct Run {
  std::string command;
  Settings settings;
  fs::path output;
};

Run resolve(const std::string& command, const std::string& config_file, const Settings& overrides,
            const std::string& output_flag) {
  Settings user;
  if (!config_file.empty()) user = Settings::load(config_file);
  user.merge(overrides);
  user.check_known_keys();
  Run run{command, default_settings(), {}};
  run.settings.merge(user);
  if (!output_flag.empty()) {
    run.output = output_flag;
  } else if (run.settings.has("run.output")) {
    run.output = run.settings.get_string("run.output", "");
  } else {
    const char* root = std::getenv(kOutputRootVariable);
    run.output = fs::path(root && *root ? root : "runs") / command;
  }
  run.settings.set("run.output", run.output.string());
  fs::create_directories(run.output);
  std::ofstream(run.output / "config.txt") << run.settings.to_text();
  return run;
}

std::string data_root(const Settings& s, const std::string& key) { return s.get_string(key, ""); }

/// Training split: data.root when set, otherwise the synthetic training split.
Dataset training_data(const Settings& s) {
  const std::string root = data_root(s, "data.root");
  if (!root.empty()) return load_dataset(root, load_options_from(s));
  return generate_synthetic(synth_config_from(s));
}

/// Evaluation split: data.test_root when set, otherwise the identity-disjoint
/// synthetic test split.
Dataset test_data(const Settings& s) {
  const std::string root = data_root(s, "data.test_root");
  if (!root.empty()) return load_dataset(root, load_options_from(s));
  const int identities = static_cast<int>(s.get_int("eval.test_identities", 40));
  return make_synthetic_benchmark(synth_config_from(s), identities).test;
}

Benchmark benchmark(const Settings& s) {
  if (!data_root(s, "data.root").empty() || !data_root(s, "data.test_root").empty()) {
    Benchmark b{training_data(s), test_data(s)};
    b.train.identities.reset();
    return b;
  }
  return make_synthetic_benchmark(synth_config_from(s),
                                  static_cast<int>(s.get_int("eval.test_identities", 40)));
}

ExperimentOptions experiment_options(const Settings& s) {
  ExperimentOptions o;
  o.seeds.clear();
  for (int seed : s.get_int_list("eval.seeds", {1, 2, 3, 4, 5})) o.seeds.push_back(static_cast<std::uint64_t>(seed));
  o.use_groups = s.get_bool("data.use_groups", false);
  o.probe.seed = static_cast<std::uint64_t>(s.get_int("eval.probe_seed", static_cast<long>(o.probe.seed)));
  return o;
}

void print_progress(const CellResult& r) {
  std::cerr << r.name << " seed " << r.seed << ": ";
  if (r.diverged) {
    std::cerr << "diverged (" << r.error << ")\n";
  } else {
    std::cerr << "rank1 " << format_double(r.rank1) << " map " << format_double(r.map) << " probe "
              << format_double(r.probe_accuracy) << '\n';
  }
}

void print_table(const std::vector<TableRow>& rows) {
  for (const auto& row : rows) {
    std::cout << row.spec.name << ": rank1 " << format_double(row.median.rank1) << " map "
              << format_double(row.median.map) << " probe " << format_double(row.median.probe_accuracy);
    if (row.diverged) std::cout << " (" << row.diverged << " diverged)";
    std::cout << '\n';
  }
}

void write_tables(const std::vector<TableRow>& rows, const fs::path& dir, const std::string& stem) {
  write_table_csv(rows, dir / (stem + ".csv"));
  write_runs_csv(rows, dir / (stem + "_runs.csv"));
  print_table(rows);
}

fs::path checkpoint_path(const Run& run, const std::string& flag) {
  const std::string path = flag.empty() ? run.settings.get_string("eval.checkpoint", "") : flag;
  if (path.empty()) throw ConfigError(run.command + ": no checkpoint (pass --checkpoint or eval.checkpoint)");
  return path;
}

void cmd_synth(const Run& run) {
  const SynthConfig config = synth_config_from(run.settings);
  const int identities = static_cast<int>(run.settings.get_int("eval.test_identities", 40));
  const Benchmark b = make_synthetic_benchmark(config, identities);
  save_dataset(b.train, run.output / "dataset");
  save_dataset(b.test, run.output / "test");
  std::cout << "wrote " << b.train.size() << " training and " << b.test.size() << " test tracklets to "
            << run.output.string() << '\n';
}

void cmd_train(const Run& run) {
  const Settings& s = run.settings;
  const TrainConfig config = train_config_from(s);
  Dataset data = training_data(s);
  const auto label_seed = s.has("train.label_seed")
                              ? static_cast<std::uint64_t>(s.get_int("train.label_seed", 0))
                              : derive_seed(config.seed, "labels");
  assign_pseudo_labels(data.tracklets, label_seed, s.get_bool("data.use_groups", false));
  const auto on_checkpoint = [&](int step, const Model& model) {
    save_checkpoint(model, run.output / ("checkpoint_" + std::to_string(step) + ".ckpt"));
  };
  const TrainResult result = train(data.tracklets, config, on_checkpoint);
  save_checkpoint(result.model, run.output / "model.ckpt");
  write_metrics_log((run.output / "train_log.csv").string(), result.log);
  const auto& last = result.log.back();
  std::cout << "trained " << config.steps << " steps: id " << format_double(last.loss.id) << " adv "
            << format_double(last.loss.adv) << '\n';
}

void cmd_eval(const Run& run, const std::string& checkpoint) {
  const Model model = load_checkpoint(checkpoint_path(run, checkpoint));
  const Dataset test = test_data(run.settings);
  ProbeOptions probe;
  probe.seed = static_cast<std::uint64_t>(run.settings.get_int("eval.probe_seed", static_cast<long>(probe.seed)));
  const EvaluationSummary summary = evaluate(model, test, probe);
  write_metrics_csv(summary.ranking, run.output / "metrics.csv");
  std::ofstream(run.output / "probe.csv") << "accuracy,chance,train_size,test_size\n"
                                          << format_double(summary.probe.accuracy) << ','
                                          << format_double(summary.probe.chance) << ','
                                          << summary.probe.train_size << ',' << summary.probe.test_size << '\n';
  std::cout << "rank1 " << format_double(100.0 * summary.ranking.rank(1)) << " map "
            << format_double(100.0 * summary.ranking.map) << " probe " << format_double(summary.probe.accuracy)
            << '\n';
}

void cmd_ablate(const Run& run, bool k_sweep, bool groupings) {
  const Settings& s = run.settings;
  const Benchmark b = benchmark(s);
  const TrainConfig base = train_config_from(s);
  const ExperimentOptions options = experiment_options(s);
  const auto k_values = s.get_int_list("eval.k_values", {1, 2, 3, 4, 5});
  write_tables(run_ablation(b, base, k_values, options, print_progress), run.output, "ablation");
  if (k_sweep) write_tables(run_grid(b, k_sweep_cells(base, k_values), options, print_progress), run.output, "k_sweep");
  if (groupings) {
    const auto cells = grouping_cells(base, nested_groupings(b.train.tracklets.n_cameras));
    write_tables(run_grid(b, cells, options, print_progress), run.output, "groupings");
  }
}

void cmd_robustness(const Run& run) {
  const Settings& s = run.settings;
  const auto rates = s.get_double_list("eval.rates", {0, 10, 30, 50});
  const auto rows = run_robustness(benchmark(s), train_config_from(s), rates, experiment_options(s), print_progress);
  write_tables(rows, run.output, "robustness");
}

void cmd_export(const Run& run, const std::string& checkpoint, const std::string& split) {
  const Model model = load_checkpoint(checkpoint_path(run, checkpoint));
  Dataset data;
  if (split == "test") {
    data = test_data(run.settings);
  } else {
    data = training_data(run.settings);
  }
  const FeatureTable table = feature_table(model, data, run.settings.get_bool("eval.pca", true));
  write_feature_csv(table, run.output / "features.csv");
  if (data.has_ground_truth()) {
    const int bins = static_cast<int>(run.settings.get_int("eval.bins", 30));
    write_histogram_csv(distance_histogram(embed_dataset(model, data), bins), run.output / "histogram.csv");
  }
  std::cout << "exported " << table.rows.size() << " embeddings to " << (run.output / "features.csv").string()
            << '\n';
}

void cmd_plot(const Run& run, const std::string& histogram, const std::string& k_sweep,
              const std::string& projection) {
  if (histogram.empty() && k_sweep.empty() && projection.empty()) {
    throw ConfigError("plot: pass at least one of --histogram, --k-sweep, --projection");
  }
  std::vector<fs::path> written;
  if (!histogram.empty()) {
    plot_histogram(histogram, run.output / "histogram.png");
    written.push_back(run.output / "histogram.png");
  }
  if (!k_sweep.empty()) {
    plot_k_sweep(k_sweep, run.output / "k_sweep.png");
    written.push_back(run.output / "k_sweep.png");
  }
  if (!projection.empty()) {
    for (auto& p : plot_projection(projection, run.output / "projection")) written.push_back(p);
  }
  for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  Settings overrides;
  std::vector<std::string> args;
  try {
    args = extract_overrides(argc, argv, overrides);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Camera-domain alignment for unsupervised re-identification.\n"
               "Any config key can be overridden with --section.key=value."};
  app.failure_message(CLI::FailureMessage::help);
  app.require_subcommand(1);
  std::string config_file;
  std::string output;
  app.add_option("-c,--config", config_file, "Config file (section.key = value lines)")->check(CLI::ExistingFile);
  app.add_option("-o,--output", output,
                 std::string("Output directory (default $") + kOutputRootVariable + "/<command> or runs/<command>)");

  std::string checkpoint;
  std::string split = "test";
  bool k_sweep = false;
  bool groupings = false;
  std::string histogram_csv, k_sweep_csv, projection_csv;

  auto* synth = app.add_subcommand("synth", "Render the synthetic training and test splits to disk");
  auto* train_cmd = app.add_subcommand("train", "Train a model and write model.ckpt");
  auto* eval = app.add_subcommand("eval", "Rank the test split with a checkpoint and write metrics.csv");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file (or eval.checkpoint)");
  auto* ablate = app.add_subcommand("ablate", "Loss ablation table over eval.seeds");
  ablate->add_flag("--k-sweep", k_sweep, "Also sweep K for adaptive and strict-stripe masks");
  ablate->add_flag("--groupings", groupings, "Also compare nested camera groupings");
  auto* robustness = app.add_subcommand("robustness", "Baseline vs part-aware alignment under ID fragmentation");
  auto* export_cmd = app.add_subcommand("export", "Write embeddings, 2-D projection and distance histogram");
  export_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file (or eval.checkpoint)");
  export_cmd->add_option("--split", split, "Which split to embed")->check(CLI::IsMember({"train", "test"}));
  auto* plot = app.add_subcommand("plot", "Render PNG plots from exported CSV files");
  plot->add_option("--histogram", histogram_csv, "Histogram CSV")->check(CLI::ExistingFile);
  plot->add_option("--k-sweep", k_sweep_csv, "K-sweep table CSV")->check(CLI::ExistingFile);
  plot->add_option("--projection", projection_csv, "Feature CSV with pc1,pc2")->check(CLI::ExistingFile);
  for (auto* sub : {synth, train_cmd, eval, ablate, robustness, export_cmd, plot}) sub->fallthrough();

  std::vector<char*> cargs;
  for (auto& a : args) cargs.push_back(a.data());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const std::string command = app.get_subcommands().front()->get_name();
    const Run run = resolve(command, config_file, overrides, output);
    if (command == "synth") cmd_synth(run);
    if (command == "train") cmd_train(run);
    if (command == "eval") cmd_eval(run, checkpoint);
    if (command == "ablate") cmd_ablate(run, k_sweep, groupings);
    if (command == "robustness") cmd_robustness(run);
    if (command == "export") cmd_export(run, checkpoint, split);
    if (command == "plot") cmd_plot(run, histogram_csv, k_sweep_csv, projection_csv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

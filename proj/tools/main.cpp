#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ampe/harness.hpp"

namespace {

ampe::ExperimentConfig load(const std::string& config, uint64_t* seed, long divisor,
                            const std::string& output) {
  ampe::ExperimentConfig cfg = ampe::load_config(config);
  if (seed) cfg.seed = *seed;
  cfg.train.seed = cfg.seed;
  if (!output.empty()) cfg.output_dir = output;
  ampe::apply_scale_divisor(cfg, divisor);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Amortized in-context posterior estimation"};
  app.require_subcommand(1);

  std::string config, output, checkpoint, kind = "analytic", plq_out = "plotdata.csv";
  std::vector<std::string> csvs, results, train_sources{"model"},
      eval_sources{"model", "gp_rbf"};
  uint64_t seed = 0;
  bool seed_set = false;
  long divisor = 1;

  auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("--config", config, "config file path or preset name")
          ->required();
    cmd->add_option_function<uint64_t>(
           "--seed", [&](uint64_t s) { seed = s; seed_set = true; },
           "override the config seed");
    cmd->add_option("--scale-divisor", divisor,
                    "divide iteration counts for desk-scale runs");
    cmd->add_option("--output", output, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train an amortized estimator");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();

  CLI::App* baseline = app.add_subcommand("baseline", "run a dataset-specific baseline");
  add_common(baseline);
  baseline->add_option("--kind", kind, "analytic|map|langevin|random");

  CLI::App* misspec = app.add_subcommand("misspec", "cross-source training matrix");
  add_common(misspec);
  misspec->add_option("--train-sources", train_sources, "training sources");
  misspec->add_option("--eval-sources", eval_sources, "evaluation sources");

  CLI::App* tabular = app.add_subcommand("tabular", "zero-shot + finetune on CSVs");
  add_common(tabular);
  tabular->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
  tabular->add_option("--csv", csvs, "csv dataset paths")->required();

  CLI::App* plotdata = app.add_subcommand("plotdata", "merge results into a tidy CSV");
  plotdata->add_option("--results", results, "results.jsonl paths")->required();
  plotdata->add_option("--out", plq_out, "output csv path");

  CLI11_PARSE(app, argc, argv);

  try {
    uint64_t* seed_ptr = seed_set ? &seed : nullptr;
    if (train->parsed()) {
      ampe::RunPaths p = ampe::cmd_train(load(config, seed_ptr, divisor, output));
      std::cout << "checkpoint: " << p.checkpoint_path << "\n"
                << "trace: " << p.trace_path << "\n";
    } else if (eval->parsed()) {
      ampe::RunPaths p =
          ampe::cmd_eval(load(config, seed_ptr, divisor, output), checkpoint);
      std::cout << "results: " << p.results_path << "\n";
    } else if (baseline->parsed()) {
      ampe::RunPaths p = ampe::cmd_baseline(load(config, seed_ptr, divisor, output),
                                            ampe::baseline_from_name(kind));
      std::cout << "results: " << p.results_path << "\n";
    } else if (misspec->parsed()) {
      std::vector<ampe::Source> ts, es;
      for (const auto& s : train_sources) ts.push_back(ampe::source_from_name(s));
      for (const auto& s : eval_sources) es.push_back(ampe::source_from_name(s));
      ampe::RunPaths p =
          ampe::cmd_misspec(load(config, seed_ptr, divisor, output), ts, es);
      std::cout << "results: " << p.results_path << "\n";
    } else if (tabular->parsed()) {
      ampe::RunPaths p = ampe::cmd_tabular(load(config, seed_ptr, divisor, output),
                                           checkpoint, csvs);
      std::cout << "results: " << p.results_path << "\n";
    } else if (plotdata->parsed()) {
      std::cout << "plotdata: " << ampe::emit_plotdata(results, plq_out) << "\n";
    }
  } catch (const ampe::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const ampe::DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

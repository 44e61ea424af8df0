// Command-line front end: generate | train | baseline | evaluate | project.
// Exit codes: 0 success, 2 usage or configuration error, 1 runtime/data error.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsc/commands.hpp"

namespace {

// A --config JSON file supplies defaults; explicit flags override it. The
// file has to be applied before CLI11 parses, so scan argv for it first.
std::string config_path_from_argv(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

void add_common_train_options(CLI::App* cmd, dsc::RunConfig& cfg, std::string& config_arg) {
  cmd->add_option("--seed", cfg.train.seed, "base RNG seed");
  cmd->add_option("--k", cfg.train.k, "number of clusters");
  cmd->add_option("--truth", cfg.truth, "ground-truth labels CSV (adds ARI/NMI)");
  cmd->add_option("--impute", cfg.impute, "missing-value imputation: per-variable|global")
      ->check(CLI::IsMember({"per-variable", "global"}));
  // applied by the pre-scan above; registered so CLI11 accepts the flag
  cmd->add_option("--config", config_arg, "JSON config file (flags override it)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deep spatiotemporal clustering toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("dsc ") + dsc::kVersion);

  dsc::GenerateConfig gen;
  dsc::RunConfig cfg;
  std::size_t grid = 16;
  std::string config_arg;

  const std::string config_path = config_path_from_argv(argc, argv);
  if (!config_path.empty()) {
    try {
      dsc::load_config_file(cfg, config_path);
    } catch (const dsc::ConfigError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 2;
    }
  }

  auto* cmd_generate =
      app.add_subcommand("generate", "write a labeled synthetic dataset");
  cmd_generate->add_option("--out", gen.out, "output directory")->required();
  cmd_generate->add_option("--timesteps", gen.spec.timesteps, "number of observations");
  cmd_generate->add_option("--grid", grid, "square grid extent");
  cmd_generate->add_option("--vars", gen.spec.vars, "number of variables");
  cmd_generate->add_option("--clusters", gen.spec.regimes, "number of regimes");
  cmd_generate->add_option("--separation", gen.spec.separation, "regime separation scale");
  cmd_generate->add_option("--noise", gen.spec.noise_sigma, "white-noise sigma");
  cmd_generate->add_option("--seed", gen.spec.seed, "RNG seed");

  auto* cmd_train = app.add_subcommand("train", "train a model, best of N runs");
  cmd_train->add_option("--data", cfg.data, "dataset directory")->required();
  cmd_train->add_option("--out", cfg.out, "run output directory")->required();
  cmd_train
      ->add_option("--variant", cfg.variant,
                   "architecture: cnn-enc|cnn-ae|cnn-lstm-enc|cnn-lstm-ae")
      ->check(CLI::IsMember({"cnn-enc", "cnn-ae", "cnn-lstm-enc", "cnn-lstm-ae"}));
  cmd_train->add_option("--runs", cfg.runs, "number of seeded runs");
  cmd_train
      ->add_option("--selection", cfg.selection,
                   "metric picking the reported run")
      ->check(CLI::IsMember(
          {"silhouette", "davies_bouldin", "rmse_mean", "avg_intercluster_distance"}));
  cmd_train->add_option("--lr", cfg.train.learning_rate, "SGD learning rate");
  cmd_train->add_option("--momentum", cfg.train.momentum, "SGD momentum");
  cmd_train->add_option("--batch-size", cfg.train.batch_size, "minibatch size");
  cmd_train->add_option("--max-epochs", cfg.train.max_epochs, "epoch cap");
  cmd_train->add_option("--patience", cfg.train.patience,
                        "epochs of unchanged assignments before stopping");
  cmd_train->add_option("--kmeans-restarts", cfg.train.kmeans_restarts,
                        "centroid init restarts");
  cmd_train->add_option("--latent", cfg.latent, "embedding dimension");
  cmd_train->add_option("--weight-clus", cfg.train.weight_clus, "clustering loss weight");
  cmd_train->add_option("--weight-rec", cfg.train.weight_rec, "reconstruction loss weight");
  cmd_train->add_option("--alpha", cfg.train.alpha, "Student's-t degrees of freedom");
  cmd_train->add_option("--jobs", cfg.jobs, "concurrent runs");
  cmd_train->add_option("--threads", cfg.train.threads,
                        "worker threads per run (0 = all cores)");
  add_common_train_options(cmd_train, cfg, config_arg);

  auto* cmd_baseline = app.add_subcommand("baseline", "classical clustering baseline");
  cmd_baseline->add_option("--data", cfg.data, "dataset directory")->required();
  cmd_baseline->add_option("--out", cfg.out, "run output directory")->required();
  cmd_baseline->add_option("--method", cfg.method, "kmeans|hierarchical")
      ->check(CLI::IsMember({"kmeans", "hierarchical"}));
  cmd_baseline->add_option("--restarts", cfg.train.kmeans_restarts, "k-means restarts");
  cmd_baseline->add_option("--max-iter", cfg.max_iter, "k-means Lloyd iteration cap");
  add_common_train_options(cmd_baseline, cfg, config_arg);

  auto* cmd_evaluate = app.add_subcommand("evaluate", "metric report for assignments");
  cmd_evaluate->add_option("--data", cfg.data, "dataset directory")->required();
  cmd_evaluate->add_option("--assignments", cfg.assignments, "assignments CSV")->required();
  cmd_evaluate->add_option("--out", cfg.out, "report path (default: stdout)");
  add_common_train_options(cmd_evaluate, cfg, config_arg);

  auto* cmd_project = app.add_subcommand("project", "2-D PCA projection export");
  cmd_project->add_option("--data", cfg.data, "dataset directory")->required();
  cmd_project->add_option("--assignments", cfg.assignments, "assignments CSV")->required();
  cmd_project->add_option("--out", cfg.out, "projection CSV path")->required();
  add_common_train_options(cmd_project, cfg, config_arg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (cmd_generate->parsed()) {
      gen.spec.rows = grid;
      gen.spec.cols = grid;
      return dsc::run_generate(gen);
    }
    if (cmd_train->parsed()) return dsc::run_train(cfg);
    if (cmd_baseline->parsed()) return dsc::run_baseline(cfg);
    if (cmd_evaluate->parsed()) return dsc::run_evaluate(cfg, std::cout);
    if (cmd_project->parsed()) return dsc::run_project(cfg);
  } catch (const dsc::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const dsc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

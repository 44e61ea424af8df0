#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/checkpoint.hpp"
#include "dsc/common.hpp"
#include "dsc/data_io.hpp"
#include "dsc/metrics.hpp"
#include "dsc/run_io.hpp"
#include "dsc/trainer.hpp"

// Implementation of the CLI subcommands, kept out of main() so the test
// suite can drive the exact code paths the binary runs. Every report embeds
// the fully resolved RunConfig and the artifact version.

namespace dsc {

/// Merged view of everything a run needs. Field defaults are the library
/// defaults; a JSON config file overrides them and command-line flags
/// override both.
struct RunConfig {
  std::string data;
  std::string out;
  std::string variant = "cnn-lstm-ae";
  std::string method = "kmeans";        // baseline only
  std::size_t runs = 20;
  std::string selection = "silhouette"; // best-of-N pick
  std::string truth;                    // optional ground-truth CSV
  std::string assignments;              // evaluate/project input
  std::string impute = "per-variable";  // or "global"
  std::size_t jobs = 1;                 // concurrent runs
  std::size_t latent = 256;
  std::size_t max_iter = 100;           // baseline k-means Lloyd cap
  TrainConfig train;
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return nlohmann::json{
      {"data", c.data},
      {"out", c.out},
      {"variant", c.variant},
      {"method", c.method},
      {"runs", c.runs},
      {"selection", c.selection},
      {"truth", c.truth},
      {"assignments", c.assignments},
      {"impute", c.impute},
      {"jobs", c.jobs},
      {"latent", c.latent},
      {"max_iter", c.max_iter},
      {"learning_rate", c.train.learning_rate},
      {"momentum", c.train.momentum},
      {"batch_size", c.train.batch_size},
      {"max_epochs", c.train.max_epochs},
      {"patience", c.train.patience},
      {"k", c.train.k},
      {"kmeans_restarts", c.train.kmeans_restarts},
      {"seed", c.train.seed},
      {"weight_clus", c.train.weight_clus},
      {"weight_rec", c.train.weight_rec},
      {"alpha", c.train.alpha},
      {"threads", c.train.threads},
  };
}

/// Applies a JSON config file onto `c`. Unknown keys are rejected so typos
/// cannot silently fall back to defaults.
inline void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "data") c.data = value.get<std::string>();
    else if (key == "out") c.out = value.get<std::string>();
    else if (key == "variant") c.variant = value.get<std::string>();
    else if (key == "method") c.method = value.get<std::string>();
    else if (key == "runs") c.runs = value.get<std::size_t>();
    else if (key == "selection") c.selection = value.get<std::string>();
    else if (key == "truth") c.truth = value.get<std::string>();
    else if (key == "assignments") c.assignments = value.get<std::string>();
    else if (key == "impute") c.impute = value.get<std::string>();
    else if (key == "jobs") c.jobs = value.get<std::size_t>();
    else if (key == "latent") c.latent = value.get<std::size_t>();
    else if (key == "max_iter") c.max_iter = value.get<std::size_t>();
    else if (key == "learning_rate") c.train.learning_rate = value.get<double>();
    else if (key == "momentum") c.train.momentum = value.get<double>();
    else if (key == "batch_size") c.train.batch_size = value.get<std::size_t>();
    else if (key == "max_epochs") c.train.max_epochs = value.get<std::size_t>();
    else if (key == "patience") c.train.patience = value.get<std::size_t>();
    else if (key == "k") c.train.k = value.get<std::size_t>();
    else if (key == "kmeans_restarts") c.train.kmeans_restarts = value.get<std::size_t>();
    else if (key == "seed") c.train.seed = value.get<std::uint64_t>();
    else if (key == "weight_clus") c.train.weight_clus = value.get<double>();
    else if (key == "weight_rec") c.train.weight_rec = value.get<double>();
    else if (key == "alpha") c.train.alpha = value.get<double>();
    else if (key == "threads") c.train.threads = value.get<unsigned>();
    else throw ConfigError("config file: unknown key '" + key + "'");
  }
}

inline void load_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  apply_config_json(c, j);
}

inline ImputeMode parse_impute(const std::string& name) {
  if (name == "per-variable") return ImputeMode::per_variable;
  if (name == "global") return ImputeMode::global;
  throw ConfigError("unknown impute mode: " + name);
}

/// Higher-is-better value of the configured selection metric.
inline double selection_score(const MetricsReport& m, const std::string& metric) {
  if (metric == "silhouette") return m.silhouette;
  if (metric == "davies_bouldin") return -m.davies_bouldin;
  if (metric == "rmse_mean") return -m.rmse_mean;
  if (metric == "avg_intercluster_distance") return m.avg_intercluster_distance;
  throw ConfigError("unknown selection metric: " + metric);
}

inline nlohmann::json artifact_stamp(const char* command) {
  return nlohmann::json{{"name", "dsc"}, {"version", kVersion}, {"command", command}};
}

inline DatasetCube load_preprocessed(const RunConfig& cfg) {
  DatasetCube cube = load_dataset(cfg.data);
  cube = impute_missing(std::move(cube), parse_impute(cfg.impute));
  return minmax_normalize(std::move(cube));
}

// ---------------------------------------------------------------------------
// generate

struct GenerateConfig {
  std::string out;
  SyntheticSpec spec;
};

inline int run_generate(const GenerateConfig& cfg) {
  auto [cube, labels] = generate_synthetic(cfg.spec);
  save_dataset(cfg.out, cube);
  write_assignments_csv(std::filesystem::path(cfg.out) / "truth_labels.csv", labels);
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct RunOutcome {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  TrainResult<float> result;
  MetricsReport input_metrics;
  MetricsReport latent_metrics;
  double score = 0.0;
  bool metrics_ok = true;
};

inline int run_train(const RunConfig& cfg) {
  if (cfg.runs < 1) throw ConfigError("train: runs must be >= 1");
  const Variant variant = parse_variant(cfg.variant);
  const DatasetCube cube = load_preprocessed(cfg);
  const Tensor<double> flat = flatten(cube);
  std::optional<std::vector<int>> truth;
  if (!cfg.truth.empty()) {
    truth = read_labels_csv(cfg.truth);
    if (truth->size() != cube.timesteps()) {
      throw DataError("truth labels row count does not match dataset");
    }
  }
  const ModelDims dims{cube.rows(), cube.cols(), cube.vars()};

  std::vector<std::optional<RunOutcome>> outcomes(cfg.runs);
  parallel_for(cfg.runs, static_cast<unsigned>(cfg.jobs), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t r = lo; r < hi; ++r) {
      RunOutcome oc;
      oc.run = r;
      oc.seed = cfg.train.seed + r;
      Model<float> model = build_model<float>(variant, dims, oc.seed, cfg.latent);
      TrainConfig tc = cfg.train;
      tc.seed = oc.seed;
      oc.result = train(std::move(model), cube, tc);
      try {
        oc.input_metrics = compute_metrics(flat, oc.result.state.labels, "input",
                                           truth ? &*truth : nullptr);
        oc.latent_metrics = compute_metrics(oc.result.embeddings.template cast<double>(),
                                            oc.result.state.labels, "latent", nullptr);
        oc.score = selection_score(oc.input_metrics, cfg.selection);
      } catch (const MetricError& e) {
        // e.g. every sample collapsed into one cluster; keep the run but
        // never select it
        warn("run " + std::to_string(r) + ": " + e.what());
        oc.metrics_ok = false;
        oc.score = -std::numeric_limits<double>::infinity();
      }
      outcomes[r] = std::move(oc);
    }
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < cfg.runs; ++r) {
    if (outcomes[r]->score > outcomes[best]->score) best = r;
  }
  if (!outcomes[best]->metrics_ok) {
    throw DataError("train: every run collapsed to a single cluster");
  }
  RunOutcome& sel = *outcomes[best];

  const std::filesystem::path out(cfg.out);
  std::filesystem::create_directories(out);
  save_checkpoint(out / "model.ckpt", sel.result.model, &sel.result.state.centroids);
  write_assignments_csv(out / "assignments.csv", sel.result.state.labels);
  write_trace_csv(out / "trace.csv", sel.result.trace);

  {
    std::ofstream os(out / "runs_summary.csv");
    if (!os) throw DataError("cannot write runs_summary.csv");
    os << "run,seed,stop_reason,epochs,l_rec_final,l_clus_final,silhouette,"
          "davies_bouldin,rmse_mean,avg_intercluster_distance,avg_variance_literal,"
          "avg_variance_per_feature,ari,nmi,selected\n";
    for (std::size_t r = 0; r < cfg.runs; ++r) {
      const RunOutcome& oc = *outcomes[r];
      const EpochStats& last = oc.result.trace.back();
      os << r << ',' << oc.seed << ',' << stop_reason_name(oc.result.stop) << ','
         << oc.result.epochs << ',' << detail::fmt_double(last.l_rec) << ','
         << detail::fmt_double(last.l_clus) << ',';
      if (oc.metrics_ok) {
        const MetricsReport& m = oc.input_metrics;
        os << detail::fmt_double(m.silhouette) << ',' << detail::fmt_double(m.davies_bouldin)
           << ',' << detail::fmt_double(m.rmse_mean) << ','
           << detail::fmt_double(m.avg_intercluster_distance) << ','
           << detail::fmt_double(m.avg_variance_literal) << ','
           << detail::fmt_double(m.avg_variance_per_feature) << ','
           << (m.ari ? detail::fmt_double(*m.ari) : "") << ','
           << (m.nmi ? detail::fmt_double(*m.nmi) : "");
      } else {
        os << ",,,,,,,";
      }
      os << ',' << (r == best ? 1 : 0) << '\n';
    }
  }

  nlohmann::json report;
  report["artifact"] = artifact_stamp("train");
  report["config"] = run_config_to_json(cfg);
  report["selected_run"] = best;
  report["selected_seed"] = sel.seed;
  report["stop_reason"] = stop_reason_name(sel.result.stop);
  report["epochs"] = sel.result.epochs;
  report["parameters"] = sel.result.model.param_count();
  report["selection_metric"] = cfg.selection;
  nlohmann::json losses;
  losses["l_clus_first"] = sel.result.trace.front().l_clus;
  losses["l_clus_final"] = sel.result.trace.back().l_clus;
  if (is_autoencoder(parse_variant(cfg.variant))) {
    losses["l_rec_first"] = sel.result.trace.front().l_rec;
    losses["l_rec_final"] = sel.result.trace.back().l_rec;
  }
  report["losses"] = losses;
  report["metrics"] = metrics_to_json(sel.input_metrics);
  report["metrics_latent"] = metrics_to_json(sel.latent_metrics);
  write_json(out / "report.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// baseline

inline int run_baseline(const RunConfig& cfg) {
  const DatasetCube cube = load_preprocessed(cfg);
  const Tensor<double> flat = flatten(cube);
  std::optional<std::vector<int>> truth;
  if (!cfg.truth.empty()) {
    truth = read_labels_csv(cfg.truth);
    if (truth->size() != cube.timesteps()) {
      throw DataError("truth labels row count does not match dataset");
    }
  }
  std::vector<int> labels;
  std::optional<double> sse;
  if (cfg.method == "kmeans") {
    auto res = kmeans_fit(flat, cfg.train.k, cfg.train.kmeans_restarts, cfg.max_iter,
                          cfg.train.seed);
    labels = std::move(res.labels);
    sse = res.sse;
  } else if (cfg.method == "hierarchical") {
    labels = hierarchical_fit(flat, cfg.train.k);
  } else {
    throw ConfigError("unknown baseline method: " + cfg.method);
  }
  const MetricsReport metrics =
      compute_metrics(flat, labels, "input", truth ? &*truth : nullptr);

  const std::filesystem::path out(cfg.out);
  std::filesystem::create_directories(out);
  write_assignments_csv(out / "assignments.csv", labels);
  nlohmann::json report;
  report["artifact"] = artifact_stamp("baseline");
  report["config"] = run_config_to_json(cfg);
  report["method"] = cfg.method;
  if (sse) report["sse"] = *sse;
  report["metrics"] = metrics_to_json(metrics);
  write_json(out / "report.json", report);
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate / project

inline nlohmann::json evaluate_to_json(const RunConfig& cfg) {
  const DatasetCube cube = load_preprocessed(cfg);
  const Tensor<double> flat = flatten(cube);
  const std::vector<int> labels = read_labels_csv(cfg.assignments);
  if (labels.size() != cube.timesteps()) {
    throw DataError("assignments row count " + std::to_string(labels.size()) +
                    " does not match dataset T=" + std::to_string(cube.timesteps()));
  }
  std::optional<std::vector<int>> truth;
  if (!cfg.truth.empty()) {
    truth = read_labels_csv(cfg.truth);
    if (truth->size() != cube.timesteps()) {
      throw DataError("truth labels row count does not match dataset");
    }
  }
  const MetricsReport metrics =
      compute_metrics(flat, labels, "input", truth ? &*truth : nullptr);
  nlohmann::json report;
  report["artifact"] = artifact_stamp("evaluate");
  report["config"] = run_config_to_json(cfg);
  report["metrics"] = metrics_to_json(metrics);
  return report;
}

inline int run_evaluate(const RunConfig& cfg, std::ostream& stdout_stream) {
  const nlohmann::json report = evaluate_to_json(cfg);
  if (cfg.out.empty()) {
    stdout_stream << report.dump(2) << '\n';
  } else {
    write_json(cfg.out, report);
  }
  return 0;
}

inline int run_project(const RunConfig& cfg) {
  const DatasetCube cube = load_preprocessed(cfg);
  const Tensor<double> flat = flatten(cube);
  const std::vector<int> labels = read_labels_csv(cfg.assignments);
  if (labels.size() != cube.timesteps()) {
    throw DataError("assignments row count does not match dataset");
  }
  const Projection proj = pca_project_2d(flat);
  write_projection_csv(cfg.out, proj, labels);
  return 0;
}

}  // namespace dsc

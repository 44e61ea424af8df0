#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsc/common.hpp"
#include "dsc/metrics.hpp"
#include "dsc/trainer.hpp"

// File formats shared by the CLI commands and the trainer's run directory:
//   assignments.csv : "index,cluster", one row per timestep, clusters 0-based
//   trace.csv       : "epoch,l_rec,l_clus,l,changed_labels"
//   projection.csv  : "index,pc1,pc2,cluster"
//   report.json     : metrics + resolved config echo + stop reason

namespace dsc {

inline void write_assignments_csv(const std::filesystem::path& path,
                                  const std::vector<int>& labels) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "index,cluster\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << i << ',' << labels[i] << '\n';
  }
  if (!os) throw DataError("short write to " + path.string());
}

/// Reads "index,cluster" rows; tolerates any header line. Rows must be in
/// index order starting from zero.
inline std::vector<int> read_labels_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (!line.empty() && !(line[0] >= '0' && line[0] <= '9')) continue;  // header
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw FormatError(path.string() + ": expected 'index,cluster' rows");
    }
    std::size_t idx = 0;
    int cluster = 0;
    try {
      idx = static_cast<std::size_t>(std::stoll(line.substr(0, comma)));
      cluster = std::stoi(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": malformed row '" + line + "'");
    }
    if (idx != labels.size()) {
      throw FormatError(path.string() + ": rows out of order at index " +
                        std::to_string(idx));
    }
    if (cluster < 0) throw FormatError(path.string() + ": negative cluster id");
    labels.push_back(cluster);
  }
  if (labels.empty()) throw DataError(path.string() + ": no label rows");
  return labels;
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}
}  // namespace detail

inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<EpochStats>& trace) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "epoch,l_rec,l_clus,l,changed_labels\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    os << (i + 1) << ',' << detail::fmt_double(trace[i].l_rec) << ','
       << detail::fmt_double(trace[i].l_clus) << ',' << detail::fmt_double(trace[i].l) << ','
       << trace[i].changed_labels << '\n';
  }
}

inline std::vector<EpochStats> read_trace_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::vector<EpochStats> trace;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    EpochStats st;
    std::getline(ss, field, ',');  // epoch
    std::getline(ss, field, ',');
    st.l_rec = std::stod(field);
    std::getline(ss, field, ',');
    st.l_clus = std::stod(field);
    std::getline(ss, field, ',');
    st.l = std::stod(field);
    std::getline(ss, field, ',');
    st.changed_labels = static_cast<std::size_t>(std::stoll(field));
    trace.push_back(st);
  }
  return trace;
}

inline void write_projection_csv(const std::filesystem::path& path, const Projection& proj,
                                 const std::vector<int>& labels) {
  if (labels.size() != proj.coords.extent(0)) {
    throw DataError("projection: label count does not match row count");
  }
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << "index,pc1,pc2,cluster\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    os << i << ',' << detail::fmt_double(proj.coords(i, std::size_t{0})) << ','
       << detail::fmt_double(proj.coords(i, std::size_t{1})) << ',' << labels[i] << '\n';
  }
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j = {
      {"space", r.space},
      {"silhouette", r.silhouette},
      {"davies_bouldin", r.davies_bouldin},
      {"rmse_mean", r.rmse_mean},
      {"avg_intercluster_distance", r.avg_intercluster_distance},
      {"avg_variance_literal", r.avg_variance_literal},
      {"avg_variance_per_feature", r.avg_variance_per_feature},
  };
  if (r.ari) j["ari"] = *r.ari;
  if (r.nmi) j["nmi"] = *r.nmi;
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << j.dump(2) << '\n';
  if (!os) throw DataError("short write to " + path.string());
}

}  // namespace dsc

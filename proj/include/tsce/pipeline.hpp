#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsce/classify.hpp"
#include "tsce/clustering.hpp"
#include "tsce/dataset.hpp"
#include "tsce/distance.hpp"
#include "tsce/explain.hpp"

namespace tsce {

struct DatasetConfig {
  std::string path;
  bool has_slice = false;
  std::size_t slice_start = 0, slice_len = 0;
  bool fill_missing = true;
  bool drop_sparse_rows = true;
  double sparse_threshold = 0.8;
  bool scale = false;
  double scale_lo = 0.1, scale_hi = 1.0;
  bool drop_outliers = false;
};

struct ClusteringConfig {
  std::string mode = "cluster";      // "cluster" | "labels_as_clusters"
  std::string algorithm = "kmeans";  // "kmeans" | "kmedoids"
  Metric metric;
  int k = 0;  // fixed medium k when auto_k is off
  bool auto_k = false;
  std::vector<int> candidates;
  int max_iter = 300;
  bool plan = true;  // also fit at round-half-up(k/2) and 2k
};

struct ClassificationConfig {
  std::vector<ModelKind> models{ModelKind::gbt};
  std::vector<InputConfig> configs{InputConfig::feat_only};
  bool grid = false;
  std::vector<int> seeds{0, 1, 2, 3, 4};
  HyperParams base;  // shared defaults; JSON may override any field
};

struct ExplainStageConfig {
  std::vector<ExplainMethod> methods{ExplainMethod::treeshap};
  int window = 5;
  int top_k = 5;
  bool emit_samples = false;
  int gshap_samples = 200;
  std::size_t background_limit = 100;
};

struct RunConfig {
  DatasetConfig dataset;
  ClusteringConfig clustering;
  ClassificationConfig classification;
  ExplainStageConfig explain;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;

  void validate() const;  // throws before any work on bad combinations
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
// Canonical serialized form; its hash keys the manifest and stage stamps.
std::string run_config_json(const RunConfig& c);

enum class Stage { preprocess, selectk, cluster, classify, explain_stage, report };
Stage stage_from_string(const std::string& s);

struct StageStatus {
  std::string name;
  std::string status;  // "ok" | "cached" | "failed" | "skipped"
  std::string error;
  double seconds = 0;
};

struct RunManifest {
  std::string config_hash;
  std::string version;
  bool ok = true;
  std::string failed_stage;
  std::vector<StageStatus> stages;
  std::vector<std::string> artifacts;
};

// Executes stages preprocess..upto in order, reusing artifacts whose stamps
// match. Stage failure marks later stages skipped; manifest.json is always
// written. Never throws for stage errors (config/IO validation still throws).
RunManifest run_pipeline(const RunConfig& cfg, Stage upto = Stage::report);

}  // namespace tsce

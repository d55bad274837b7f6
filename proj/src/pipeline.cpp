#include "tsce/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"
#include "tsce/svg.hpp"

namespace tsce {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

json metric_json(const Metric& m) {
  json j;
  j["kind"] = to_string(m.kind);
  if (m.band) j["band"] = *m.band;
  if (m.kind == MetricKind::mpbd) {
    j["eps"] = m.eps;
    j["w_same"] = m.w_same;
    j["w_one"] = m.w_one;
    j["w_opp"] = m.w_opp;
  }
  return j;
}

Metric metric_from_json(const json& j) {
  Metric m;
  if (j.is_string()) {
    m.kind = metric_kind_from_string(j.get<std::string>());
    return m;
  }
  if (j.contains("kind")) m.kind = metric_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("band") && !j.at("band").is_null()) m.band = j.at("band").get<int>();
  if (j.contains("eps")) m.eps = j.at("eps").get<double>();
  if (j.contains("w_same")) m.w_same = j.at("w_same").get<double>();
  if (j.contains("w_one")) m.w_one = j.at("w_one").get<double>();
  if (j.contains("w_opp")) m.w_opp = j.at("w_opp").get<double>();
  return m;
}

json hyperparams_json(const HyperParams& hp) {
  json j;
  j["model"] = to_string(hp.kind);
  j["knn"] = {{"k", hp.knn.k}, {"metric", hp.knn.use_dtw ? "dtw" : "minkowski"}};
  j["gbt"] = {{"eta", hp.gbt.eta},       {"rounds", hp.gbt.rounds},
              {"lambda", hp.gbt.lambda}, {"gamma", hp.gbt.gamma},
              {"max_depth", hp.gbt.max_depth}};
  j["fcn"] = {{"layers", hp.fcn_arch.n_layers},
              {"filters", hp.fcn_arch.first_filters},
              {"optimizer", hp.fcn_opt.adam ? "adam" : "sgd"},
              {"lr", hp.fcn_opt.lr},
              {"epochs", hp.fcn_opt.epochs},
              {"batch", hp.fcn_opt.batch}};
  return j;
}

HyperParams hyperparams_from_json(const json& j, const HyperParams& base) {
  HyperParams hp = base;
  if (j.contains("model")) hp.kind = model_kind_from_string(j.at("model").get<std::string>());
  if (j.contains("knn")) {
    const json& k = j.at("knn");
    if (k.contains("k")) hp.knn.k = k.at("k").get<int>();
    if (k.contains("metric")) hp.knn.use_dtw = k.at("metric").get<std::string>() == "dtw";
  }
  if (j.contains("gbt") || j.contains("xgboost")) {
    const json& g = j.contains("gbt") ? j.at("gbt") : j.at("xgboost");
    if (g.contains("eta")) hp.gbt.eta = g.at("eta").get<double>();
    if (g.contains("rounds")) hp.gbt.rounds = g.at("rounds").get<int>();
    if (g.contains("lambda")) hp.gbt.lambda = g.at("lambda").get<double>();
    if (g.contains("gamma")) hp.gbt.gamma = g.at("gamma").get<double>();
    if (g.contains("max_depth")) hp.gbt.max_depth = g.at("max_depth").get<int>();
  }
  if (j.contains("fcn")) {
    const json& f = j.at("fcn");
    if (f.contains("layers")) hp.fcn_arch.n_layers = f.at("layers").get<int>();
    if (f.contains("filters")) hp.fcn_arch.first_filters = f.at("filters").get<int>();
    if (f.contains("optimizer")) hp.fcn_opt.adam = f.at("optimizer").get<std::string>() != "sgd";
    if (f.contains("lr")) hp.fcn_opt.lr = f.at("lr").get<double>();
    if (f.contains("epochs")) hp.fcn_opt.epochs = f.at("epochs").get<int>();
    if (f.contains("batch")) hp.fcn_opt.batch = f.at("batch").get<int>();
  }
  return hp;
}

const char* method_color(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::treeshap: return "#1f77b4";
    case ExplainMethod::gradientshap: return "#2ca02c";
    case ExplainMethod::gradcam: return "#ff7f0e";
    case ExplainMethod::tree_gain: return "#9467bd";
  }
  return "#000000";
}

struct LevelFit {
  std::string name;  // "labels", "k_low", "k_medium", "k_high"
  int k = 0;
  std::vector<int> assignments;
  std::vector<int> class_to_orig;  // labels mode: dense -> original label
  double inertia = 0;
  int iterations = 0;
  std::vector<int> medoid_ids;
  bool has_validity = false;
  ValidityScores scores;
  std::string validity_error;

  std::string file_stem() const {
    return name == "labels" ? std::string("clustering_labels")
                            : "clustering_k" + std::to_string(k);
  }
};

// Rows of classification_results.csv (also parsed back for the report).
struct ResultRow {
  std::string dataset, level, config, model, params;
  int k_before = 0, k_after = 0, v = 0;
  double f1_m = 0, f1_s = 0, acc_m = 0, acc_s = 0, prec_m = 0, prec_s = 0,
         rec_m = 0, rec_s = 0;
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

class Runner {
 public:
  Runner(const RunConfig& cfg, Stage upto) : cfg_(cfg), upto_(upto), out_(cfg.output_dir) {}

  RunManifest run() {
    cfg_.validate();
    fs::create_directories(out_);
    man_.version = kVersion;
    man_.config_hash = hex64(fnv1a_str(run_config_json(cfg_)));

    struct StageDef {
      Stage stage;
      const char* name;
      void (Runner::*fn)();
    };
    const StageDef defs[] = {
        {Stage::preprocess, "preprocess", &Runner::stage_preprocess},
        {Stage::selectk, "selectk", &Runner::stage_selectk},
        {Stage::cluster, "cluster", &Runner::stage_cluster},
        {Stage::classify, "classify", &Runner::stage_classify},
        {Stage::explain_stage, "explain", &Runner::stage_explain},
        {Stage::report, "report", &Runner::stage_report},
    };
    bool aborted = false;
    for (const auto& def : defs) {
      if (static_cast<int>(def.stage) > static_cast<int>(upto_)) break;
      StageStatus st;
      st.name = def.name;
      if (aborted) {
        st.status = "skipped";
        man_.stages.push_back(st);
        continue;
      }
      auto t0 = std::chrono::steady_clock::now();
      try {
        cached_ = false;
        (this->*def.fn)();
        st.status = cached_ ? "cached" : "ok";
      } catch (const std::exception& e) {
        st.status = "failed";
        st.error = e.what();
        man_.ok = false;
        man_.failed_stage = def.name;
        aborted = true;
      }
      st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      man_.stages.push_back(st);
    }
    write_manifest();
    return man_;
  }

 private:
  RunConfig cfg_;
  Stage upto_;
  fs::path out_;
  RunManifest man_;
  bool cached_ = false;

  TimeSeriesCollection pre_;
  std::uint64_t input_hash_ = 0;
  std::vector<int> cand_ks_;
  Series cand_inertias_;
  int k_medium_ = 0;
  std::vector<LevelFit> levels_;
  std::map<int, ClusteringResult> fits_by_k_;  // auto-mode candidate fits
  std::map<std::string, HyperParams> best_;    // "<config>/<model>"

  void add_artifact(const fs::path& p) {
    man_.artifacts.push_back(fs::relative(p, out_).generic_string());
  }

  // ---- stamps ------------------------------------------------------------

  fs::path stamp_path(const std::string& stage) const {
    return out_ / "stamps" / (stage + ".stamp");
  }

  bool stamp_matches(const std::string& stage, const std::string& value,
                     const std::vector<fs::path>& artifacts) const {
    fs::path sp = stamp_path(stage);
    if (!fs::exists(sp)) return false;
    std::ifstream in(sp);
    std::string have;
    std::getline(in, have);
    if (have != value) return false;
    for (const auto& a : artifacts)
      if (!fs::exists(a)) return false;
    return true;
  }

  void write_stamp(const std::string& stage, const std::string& value) {
    write_file(stamp_path(stage), value + "\n");
    add_artifact(stamp_path(stage));
  }

  std::string dataset_stamp_value() const {
    json frag;
    frag["input"] = hex64(input_hash_);
    frag["dataset"] = dataset_config_json();
    return hex64(fnv1a_str(frag.dump()));
  }

  std::string selectk_stamp_value(const std::string& pre_stamp) const {
    json frag;
    frag["pre"] = pre_stamp;
    frag["clustering"] = clustering_config_json();
    frag["seed"] = cfg_.master_seed;
    return hex64(fnv1a_str(frag.dump()));
  }

  std::string classify_stamp_value(const std::string& cluster_stamp) const {
    json frag;
    frag["cluster"] = cluster_stamp;
    frag["classification"] = classification_config_json();
    frag["seed"] = cfg_.master_seed;
    return hex64(fnv1a_str(frag.dump()));
  }

  std::string explain_stamp_value(const std::string& classify_stamp) const {
    json frag;
    frag["classify"] = classify_stamp;
    frag["explain"] = explain_config_json();
    return hex64(fnv1a_str(frag.dump()));
  }

  json dataset_config_json() const {
    const DatasetConfig& d = cfg_.dataset;
    json j;
    j["path"] = d.path;
    if (d.has_slice) j["slice"] = {{"start", d.slice_start}, {"len", d.slice_len}};
    j["fill_missing"] = d.fill_missing;
    j["drop_sparse"] = d.drop_sparse_rows;
    j["sparse_threshold"] = d.sparse_threshold;
    j["scale"] = d.scale;
    j["scale_range"] = {d.scale_lo, d.scale_hi};
    j["remove_outliers"] = d.drop_outliers;
    return j;
  }

  json clustering_config_json() const {
    const ClusteringConfig& c = cfg_.clustering;
    json j;
    j["mode"] = c.mode;
    j["algorithm"] = c.algorithm;
    j["metric"] = metric_json(c.metric);
    if (c.auto_k)
      j["k"] = "auto";
    else
      j["k"] = c.k;
    j["candidates"] = c.candidates;
    j["max_iter"] = c.max_iter;
    j["plan"] = c.plan;
    return j;
  }

  json classification_config_json() const {
    const ClassificationConfig& c = cfg_.classification;
    json j;
    json models = json::array(), configs = json::array();
    for (auto m : c.models) models.push_back(to_string(m));
    for (auto ic : c.configs) configs.push_back(to_string(ic));
    j["models"] = models;
    j["configs"] = configs;
    j["grid"] = c.grid;
    j["seeds"] = c.seeds;
    j["params"] = hyperparams_json(c.base);
    return j;
  }

  json explain_config_json() const {
    const ExplainStageConfig& e = cfg_.explain;
    json j;
    json methods = json::array();
    for (auto m : e.methods) methods.push_back(to_string(m));
    j["methods"] = methods;
    j["window"] = e.window;
    j["top_k"] = e.top_k;
    j["emit_samples"] = e.emit_samples;
    j["gshap_samples"] = e.gshap_samples;
    j["background_limit"] = e.background_limit;
    return j;
  }

  // ---- distance cache ----------------------------------------------------

  DistanceMatrix get_distances(const TimeSeriesCollection& c, const Metric& m) {
    std::uint64_t key = fnv1a_str(m.descriptor(), collection_hash(c));
    fs::path path = out_ / "cache" / ("dist_" + hex64(key) + ".csv");
    if (fs::exists(path)) {
      try {
        DistanceMatrix d = load_distance_csv(path.string());
        if (d.ids == c.ids) {
          add_artifact(path);
          return d;
        }
      } catch (const std::exception&) {
        // fall through to recompute
      }
    }
    DistanceMatrix d = pairwise_matrix(c, m);
    fs::create_directories(path.parent_path());
    save_distance_csv(d, path.string());
    add_artifact(path);
    return d;
  }

  // ---- stage: preprocess ---------------------------------------------------

  void stage_preprocess() {
    input_hash_ = fnv1a_str(read_file(cfg_.dataset.path));
    fs::path out_csv = out_ / "preprocessed.csv";
    fs::path out_rep = out_ / "preprocess_report.json";
    std::string stamp = dataset_stamp_value();
    if (stamp_matches("preprocess", stamp, {out_csv, out_rep})) {
      pre_ = load_csv(out_csv.string());
      cached_ = true;
      add_artifact(out_csv);
      add_artifact(out_rep);
      add_artifact(stamp_path("preprocess"));
      return;
    }

    TimeSeriesCollection c = load_csv(cfg_.dataset.path);
    json rep;
    rep["rows_in"] = c.size();
    rep["length_in"] = c.length();
    const DatasetConfig& d = cfg_.dataset;
    if (d.has_slice) {
      c = slice_window(c, d.slice_start, d.slice_len);
      rep["slice"] = {{"start", d.slice_start}, {"len", d.slice_len}, {"rows", c.size()}};
    }
    if (d.drop_sparse_rows) {
      auto [kept, r] = drop_sparse(c, d.sparse_threshold);
      c = std::move(kept);
      rep["dropped_sparse"] = r.dropped_sparse;
    }
    if (d.fill_missing) {
      long filled = 0;
      c = fill_missing_nearest(c, &filled);
      rep["filled_values"] = filled;
    }
    if (d.scale) {
      std::vector<ScaleRecord> recs;
      c = minmax_scale(c, d.scale_lo, d.scale_hi, &recs);
      rep["scaled_rows"] = recs.size();
    }
    if (d.drop_outliers) {
      DistanceMatrix dm = get_distances(c, cfg_.clustering.metric);
      auto [kept, r] = remove_outliers(c, dm);
      c = std::move(kept);
      rep["dropped_outliers"] = r.dropped_outliers;
    }
    c.validate();
    if (c.size() < 2) throw std::runtime_error("preprocess: fewer than 2 series remain");
    rep["rows_out"] = c.size();
    rep["length_out"] = c.length();
    pre_ = std::move(c);
    save_csv(pre_, out_csv.string());
    write_file(out_rep, rep.dump(1) + "\n");
    add_artifact(out_csv);
    add_artifact(out_rep);
    write_stamp("preprocess", stamp);
  }

  // ---- stage: selectk ------------------------------------------------------

  bool labels_mode() const { return cfg_.clustering.mode == "labels_as_clusters"; }

  void stage_selectk() {
    fs::path plan_path = out_ / "kplan.json";
    fs::path curve_path = out_ / "inertia_curve.csv";
    std::string stamp = selectk_stamp_value(dataset_stamp_value());
    std::vector<fs::path> needed{plan_path};
    if (cfg_.clustering.auto_k) needed.push_back(curve_path);
    if (stamp_matches("selectk", stamp, needed)) {
      load_kplan(plan_path);
      cached_ = true;
      for (const auto& p : needed) add_artifact(p);
      add_artifact(stamp_path("selectk"));
      return;
    }

    levels_.clear();
    json plan;
    plan["mode"] = cfg_.clustering.mode;
    if (labels_mode()) {
      if (!pre_.labels)
        throw std::runtime_error("labels_as_clusters requires a labeled dataset");
      std::set<int> distinct(pre_.labels->begin(), pre_.labels->end());
      k_medium_ = static_cast<int>(distinct.size());
      if (k_medium_ < 2) throw std::runtime_error("labels_as_clusters: fewer than 2 labels");
      LevelFit lf;
      lf.name = "labels";
      lf.k = k_medium_;
      levels_.push_back(lf);
      plan["auto"] = false;
    } else if (cfg_.clustering.auto_k) {
      cand_ks_ = cfg_.clustering.candidates;
      cand_inertias_.clear();
      std::optional<DistanceMatrix> dm;
      if (cfg_.clustering.algorithm == "kmedoids") dm = get_distances(pre_, cfg_.clustering.metric);
      for (int k : cand_ks_) {
        ClusteringResult r = fit_at(k, dm);
        cand_inertias_.push_back(r.inertia);
        fits_by_k_[k] = std::move(r);
      }
      k_medium_ = suggest_k(cand_ks_, cand_inertias_);
      std::string curve = "k,inertia\n";
      for (std::size_t i = 0; i < cand_ks_.size(); ++i)
        curve += std::to_string(cand_ks_[i]) + "," + format_double(cand_inertias_[i]) + "\n";
      write_file(curve_path, curve);
      add_artifact(curve_path);
      plan["auto"] = true;
      plan["candidates"] = cand_ks_;
      json inert = json::array();
      for (double v : cand_inertias_) inert.push_back(v);
      plan["inertias"] = inert;
    } else {
      k_medium_ = cfg_.clustering.k;
      plan["auto"] = false;
    }

    if (!labels_mode()) {
      if (cfg_.clustering.plan) {
        KPlan kp = k_plan(k_medium_);
        for (auto [name, k] : {std::pair<const char*, int>{"k_low", kp.k_L},
                               {"k_medium", kp.k_M},
                               {"k_high", kp.k_H}}) {
          LevelFit lf;
          lf.name = name;
          lf.k = k;
          levels_.push_back(lf);
        }
      } else {
        LevelFit lf;
        lf.name = "k_medium";
        lf.k = k_medium_;
        levels_.push_back(lf);
      }
    }
    plan["k_medium"] = k_medium_;
    json jl = json::array();
    for (const auto& lf : levels_) jl.push_back({{"name", lf.name}, {"k", lf.k}});
    plan["levels"] = jl;
    write_file(plan_path, plan.dump(1) + "\n");
    add_artifact(plan_path);
    write_stamp("selectk", stamp);
  }

  void load_kplan(const fs::path& plan_path) {
    json plan = json::parse(read_file(plan_path.string()));
    k_medium_ = plan.at("k_medium").get<int>();
    if (plan.value("auto", false)) {
      cand_ks_ = plan.at("candidates").get<std::vector<int>>();
      cand_inertias_ = plan.at("inertias").get<Series>();
    }
    levels_.clear();
    for (const auto& jl : plan.at("levels")) {
      LevelFit lf;
      lf.name = jl.at("name").get<std::string>();
      lf.k = jl.at("k").get<int>();
      levels_.push_back(lf);
    }
  }

  ClusteringResult fit_at(int k, const std::optional<DistanceMatrix>& dm) {
    std::uint64_t seed = derive_seed(cfg_.master_seed, "cluster_k" + std::to_string(k));
    if (cfg_.clustering.algorithm == "kmedoids") return pam_fit(*dm, k, seed);
    return kmeans_fit(pre_, k, seed, cfg_.clustering.max_iter);
  }

  // ---- stage: cluster ------------------------------------------------------

  void stage_cluster() {
    std::string stamp =
        hex64(fnv1a_str("cluster:" + selectk_stamp_value(dataset_stamp_value())));
    std::vector<fs::path> needed;
    for (const auto& lf : levels_) {
      needed.push_back(out_ / (lf.file_stem() + ".csv"));
      needed.push_back(out_ / (lf.file_stem() + ".json"));
    }
    if (stamp_matches("cluster", stamp, needed)) {
      for (auto& lf : levels_) load_level(lf);
      cached_ = true;
      for (const auto& p : needed) add_artifact(p);
      add_artifact(stamp_path("cluster"));
      return;
    }

    std::optional<DistanceMatrix> dm;
    if (!labels_mode() && cfg_.clustering.algorithm == "kmedoids")
      dm = get_distances(pre_, cfg_.clustering.metric);

    for (auto& lf : levels_) {
      if (labels_mode()) {
        fit_labels_level(lf);
      } else {
        ClusteringResult r;
        auto it = fits_by_k_.find(lf.k);
        if (it != fits_by_k_.end())
          r = it->second;
        else
          r = fit_at(lf.k, dm);
        lf.assignments = r.assignments;
        lf.inertia = r.inertia;
        lf.iterations = r.iterations;
        lf.medoid_ids = r.medoid_ids;
        try {
          lf.scores = cfg_.clustering.algorithm == "kmedoids" ? validity(*dm, r)
                                                              : validity(pre_, r);
          lf.has_validity = true;
        } catch (const std::exception& e) {
          lf.validity_error = e.what();
        }
      }
      write_level(lf);
    }
    write_stamp("cluster", stamp);
  }

  void fit_labels_level(LevelFit& lf) {
    std::set<int> distinct(pre_.labels->begin(), pre_.labels->end());
    lf.class_to_orig.assign(distinct.begin(), distinct.end());
    std::map<int, int> dense;
    for (std::size_t i = 0; i < lf.class_to_orig.size(); ++i)
      dense[lf.class_to_orig[i]] = static_cast<int>(i);
    lf.assignments.clear();
    for (int l : *pre_.labels) lf.assignments.push_back(dense[l]);
    lf.k = static_cast<int>(distinct.size());
    ClusteringResult r;
    r.k = lf.k;
    r.assignments = lf.assignments;
    r.metric.kind = MetricKind::euclidean;
    std::size_t T = pre_.length();
    r.centers.assign(static_cast<std::size_t>(lf.k), Series(T, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(lf.k), 0);
    for (std::size_t i = 0; i < pre_.size(); ++i) {
      auto c = static_cast<std::size_t>(lf.assignments[i]);
      ++counts[c];
      for (std::size_t t = 0; t < T; ++t) r.centers[c][t] += pre_.values[i][t];
    }
    for (std::size_t c = 0; c < r.centers.size(); ++c)
      for (std::size_t t = 0; t < T; ++t) r.centers[c][t] /= static_cast<double>(counts[c]);
    double w = 0;
    for (std::size_t i = 0; i < pre_.size(); ++i) {
      double d = euclidean(pre_.values[i], r.centers[static_cast<std::size_t>(lf.assignments[i])]);
      w += d * d;
    }
    r.inertia = w;
    lf.inertia = w;
    try {
      lf.scores = validity(pre_, r);
      lf.has_validity = true;
    } catch (const std::exception& e) {
      lf.validity_error = e.what();
    }
  }

  void write_level(const LevelFit& lf) {
    fs::path csv_path = out_ / (lf.file_stem() + ".csv");
    std::string csv = "id,cluster\n";
    for (std::size_t i = 0; i < pre_.size(); ++i)
      csv += pre_.ids[i] + "," + std::to_string(lf.assignments[i]) + "\n";
    write_file(csv_path, csv);
    add_artifact(csv_path);

    json j;
    j["level"] = lf.name;
    j["k"] = lf.k;
    j["algorithm"] = labels_mode() ? "labels" : cfg_.clustering.algorithm;
    j["metric"] = cfg_.clustering.metric.descriptor();
    j["inertia"] = lf.inertia;
    j["iterations"] = lf.iterations;
    if (!lf.medoid_ids.empty()) j["medoid_rows"] = lf.medoid_ids;
    if (!lf.class_to_orig.empty()) j["cluster_to_label"] = lf.class_to_orig;
    if (lf.has_validity) {
      j["validity"] = {{"silhouette", lf.scores.silhouette},
                       {"calinski_harabasz", lf.scores.calinski_harabasz},
                       {"davies_bouldin", lf.scores.davies_bouldin},
                       {"inertia", lf.scores.inertia}};
    } else {
      j["validity_error"] = lf.validity_error;
    }
    fs::path json_path = out_ / (lf.file_stem() + ".json");
    write_file(json_path, j.dump(1) + "\n");
    add_artifact(json_path);
  }

  void load_level(LevelFit& lf) {
    fs::path csv_path = out_ / (lf.file_stem() + ".csv");
    std::string text = read_file(csv_path.string());
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    std::map<std::string, int> by_id;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split_csv_line(line);
      if (fields.size() != 2) throw std::runtime_error("bad row in " + csv_path.string());
      by_id[fields[0]] = std::stoi(fields[1]);
    }
    lf.assignments.clear();
    for (const auto& id : pre_.ids) {
      auto it = by_id.find(id);
      if (it == by_id.end())
        throw std::runtime_error("cached clustering misses id " + id + "; delete " +
                                 csv_path.string());
      lf.assignments.push_back(it->second);
    }
    json j = json::parse(read_file((out_ / (lf.file_stem() + ".json")).string()));
    lf.inertia = j.value("inertia", 0.0);
    lf.iterations = j.value("iterations", 0);
    if (j.contains("medoid_rows")) lf.medoid_ids = j.at("medoid_rows").get<std::vector<int>>();
    if (j.contains("cluster_to_label"))
      lf.class_to_orig = j.at("cluster_to_label").get<std::vector<int>>();
    if (j.contains("validity")) {
      const json& v = j.at("validity");
      lf.scores.silhouette = v.at("silhouette").get<double>();
      lf.scores.calinski_harabasz = v.at("calinski_harabasz").get<double>();
      lf.scores.davies_bouldin = v.at("davies_bouldin").get<double>();
      lf.scores.inertia = v.at("inertia").get<double>();
      lf.has_validity = true;
    } else {
      lf.validity_error = j.value("validity_error", "");
    }
  }

  // ---- stage: classify -----------------------------------------------------

  ClassTask build_task(const LevelFit& lf, InputConfig config) const {
    std::uint64_t seed =
        derive_seed(cfg_.master_seed, "task_" + lf.name + "_" + to_string(config));
    return make_class_task(pre_, lf.assignments, config, seed);
  }

  std::string best_key(InputConfig config, ModelKind model) const {
    return to_string(config) + "/" + to_string(model);
  }

  HyperParams params_for(InputConfig config, ModelKind model) const {
    auto it = best_.find(best_key(config, model));
    HyperParams hp = it != best_.end() ? it->second : cfg_.classification.base;
    hp.kind = model;
    return hp;
  }

  void stage_classify() {
    fs::path res_path = out_ / "classification_results.csv";
    fs::path best_path = out_ / "best_params.json";
    std::string stamp = classify_stamp_value(
        hex64(fnv1a_str("cluster:" + selectk_stamp_value(dataset_stamp_value()))));
    if (stamp_matches("classify", stamp, {res_path, best_path})) {
      load_best(best_path);
      cached_ = true;
      add_artifact(res_path);
      add_artifact(best_path);
      add_artifact(stamp_path("classify"));
      return;
    }

    const ClassificationConfig& cc = cfg_.classification;
    const LevelFit& medium = medium_level();
    json best_json;
    std::vector<std::string> grid_failures;
    if (cc.grid) {
      for (InputConfig config : cc.configs) {
        ClassTask task = build_task(medium, config);
        for (ModelKind model : cc.models) {
          HyperParams hp = grid_search(task, model, 0, cc.base, &grid_failures);
          best_[best_key(config, model)] = hp;
        }
      }
    } else {
      for (InputConfig config : cc.configs)
        for (ModelKind model : cc.models) {
          HyperParams hp = cc.base;
          hp.kind = model;
          best_[best_key(config, model)] = hp;
        }
    }
    for (const auto& [key, hp] : best_) best_json[key] = hyperparams_json(hp);
    if (!grid_failures.empty()) best_json["grid_failures"] = grid_failures;
    write_file(best_path, best_json.dump(1) + "\n");
    add_artifact(best_path);

    std::string dataset_name = fs::path(cfg_.dataset.path).stem().string();
    std::ostringstream csv;
    csv << "dataset,level,k_before,k_after,v,config,model,params,"
           "f1_mean,f1_std,accuracy_mean,accuracy_std,"
           "precision_mean,precision_std,recall_mean,recall_std\n";
    for (const auto& lf : levels_) {
      for (InputConfig config : cc.configs) {
        ClassTask task = build_task(lf, config);
        for (ModelKind model : cc.models) {
          HyperParams hp = params_for(config, model);
          EvalReport rep = run_eval_suite(task, hp, cc.seeds);
          csv << dataset_name << ',' << lf.name << ',' << task.k_before << ','
              << task.k_after << ',' << task.v << ',' << to_string(config) << ','
              << to_string(model) << ',' << hp.describe() << ','
              << format_double(rep.mean.macro_f1) << ','
              << format_double(rep.stddev.macro_f1) << ','
              << format_double(rep.mean.accuracy) << ','
              << format_double(rep.stddev.accuracy) << ','
              << format_double(rep.mean.macro_precision) << ','
              << format_double(rep.stddev.macro_precision) << ','
              << format_double(rep.mean.macro_recall) << ','
              << format_double(rep.stddev.macro_recall) << '\n';
        }
      }
    }
    write_file(res_path, csv.str());
    add_artifact(res_path);
    write_stamp("classify", stamp);
  }

  const LevelFit& medium_level() const {
    for (const auto& lf : levels_)
      if (lf.name == "k_medium" || lf.name == "labels") return lf;
    return levels_.front();
  }

  void load_best(const fs::path& best_path) {
    json j = json::parse(read_file(best_path.string()));
    for (const auto& [key, val] : j.items()) {
      if (key == "grid_failures") continue;
      best_[key] = hyperparams_from_json(val, cfg_.classification.base);
    }
  }

  // ---- stage: explain --------------------------------------------------------

  static bool method_uses_gbt(ExplainMethod m) {
    return m == ExplainMethod::treeshap || m == ExplainMethod::tree_gain;
  }

  void stage_explain() {
    std::string stamp = explain_stamp_value(classify_stamp_value(
        hex64(fnv1a_str("cluster:" + selectk_stamp_value(dataset_stamp_value())))));
    const ClassificationConfig& cc = cfg_.classification;
    const ExplainStageConfig& ec = cfg_.explain;

    std::vector<std::pair<ExplainMethod, ModelKind>> jobs;
    for (ExplainMethod m : ec.methods) {
      ModelKind need = method_uses_gbt(m) ? ModelKind::gbt : ModelKind::fcn;
      if (std::find(cc.models.begin(), cc.models.end(), need) != cc.models.end())
        jobs.emplace_back(m, need);
    }

    std::vector<fs::path> needed;
    for (InputConfig config : cc.configs)
      for (const auto& [method, model] : jobs)
        needed.push_back(explain_csv_path(config, model, method));
    if (!needed.empty() && stamp_matches("explain", stamp, needed)) {
      cached_ = true;
      for (const auto& p : needed) add_artifact(p);
      add_artifact(stamp_path("explain"));
      return;
    }

    const LevelFit& medium = medium_level();
    for (InputConfig config : cc.configs) {
      ClassTask task = build_task(medium, config);
      auto [train_idx, test_idx] = stratified_split(task.labels, 0.3, 0);
      Matrix Xtr;
      std::vector<int> ytr;
      std::vector<std::string> train_ids;
      for (std::size_t i : train_idx) {
        Xtr.push_back(task.inputs[i]);
        ytr.push_back(task.labels[i]);
        train_ids.push_back(task.sample_ids[i]);
      }

      bool want_gbt = false, want_fcn = false;
      for (const auto& [method, model] : jobs) {
        want_gbt = want_gbt || model == ModelKind::gbt;
        want_fcn = want_fcn || model == ModelKind::fcn;
      }
      TrainedModel gbt_model, fcn_model;
      Matrix Xtr_std;
      if (want_gbt) {
        gbt_model = train_model(Xtr, ytr, params_for(config, ModelKind::gbt), 0);
        fs::path mp = out_ / "models" / (to_string(config) + "_xgboost.json");
        fs::create_directories(mp.parent_path());
        save_gbt_json(gbt_model.gbt, mp.string());
        add_artifact(mp);
      }
      if (want_fcn) {
        fcn_model = train_model(Xtr, ytr, params_for(config, ModelKind::fcn), 0);
        for (const auto& row : Xtr) Xtr_std.push_back(standardize(row));
        fs::path mp = out_ / "models" / (to_string(config) + "_fcn.json");
        fs::create_directories(mp.parent_path());
        save_fcn_json(fcn_model.fcn, mp.string());
        add_artifact(mp);
      }
      Matrix background;
      if (want_fcn) {
        std::vector<std::size_t> order(Xtr_std.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::uint64_t bg_seed = derive_seed(cfg_.master_seed, "gshap_background");
        std::mt19937 rng(static_cast<std::uint32_t>(bg_seed & 0xffffffffull));
        std::shuffle(order.begin(), order.end(), rng);
        if (order.size() > ec.background_limit) order.resize(ec.background_limit);
        std::sort(order.begin(), order.end());
        for (std::size_t i : order) background.push_back(Xtr_std[i]);
      }

      for (const auto& [method, model] : jobs) {
        ExplanationSet set;
        if (method == ExplainMethod::tree_gain) {
          set.method = method;
          set.global = gain_importance(gbt_model.gbt);
          set.window = ec.window;
          if (task.time_len > 0 && ec.window > 0) {
            Series time_part(set.global.begin(),
                             set.global.begin() + static_cast<std::ptrdiff_t>(task.time_len));
            set.windowed_global = window_means(time_part, ec.window);
          }
        } else {
          std::vector<Attribution> attrs;
          for (std::size_t i = 0; i < Xtr.size(); ++i) {
            Attribution a;
            switch (method) {
              case ExplainMethod::treeshap: {
                int pred = predict_class(gbt_model.gbt, Xtr[i]);
                a = treeshap(gbt_model.gbt, Xtr[i], pred);
                break;
              }
              case ExplainMethod::gradientshap: {
                const Series& xs = Xtr_std[i];
                int pred = fcn_predict_class(fcn_model.fcn, xs);
                a = gradient_shap(fcn_model.fcn, xs, background, pred, ec.gshap_samples,
                                  derive_seed(cfg_.master_seed, "gshap_" + train_ids[i]));
                break;
              }
              case ExplainMethod::gradcam: {
                const Series& xs = Xtr_std[i];
                int pred = fcn_predict_class(fcn_model.fcn, xs);
                a = grad_cam(fcn_model.fcn, xs, pred);
                break;
              }
              case ExplainMethod::tree_gain:
                break;
            }
            a.sample_id = train_ids[i];
            attrs.push_back(std::move(a));
          }
          set = build_explanation_set(method, std::move(attrs), ytr, task.time_len,
                                      ec.window);
        }
        write_explanation(config, model, method, set, task);
      }
    }
    write_stamp("explain", stamp);
  }

  fs::path explain_csv_path(InputConfig config, ModelKind model, ExplainMethod method) const {
    return out_ / "explain" /
           (to_string(config) + "_" + to_string(model) + "_" + to_string(method) + ".csv");
  }

  std::string cluster_column_name(const ClassTask& task, int dense) const {
    int orig = task.class_to_orig[static_cast<std::size_t>(dense)];
    const LevelFit& medium = medium_level();
    if (!medium.class_to_orig.empty())
      orig = medium.class_to_orig[static_cast<std::size_t>(orig)];
    return "cluster_" + std::to_string(orig);
  }

  void write_explanation(InputConfig config, ModelKind model, ExplainMethod method,
                         const ExplanationSet& set, const ClassTask& task) {
    fs::path path = explain_csv_path(config, model, method);
    fs::create_directories(path.parent_path());
    std::ostringstream csv;
    csv << "position,name,global";
    for (const auto& [cluster, curve] : set.per_cluster)
      csv << ',' << cluster_column_name(task, cluster);
    csv << '\n';
    for (std::size_t i = 0; i < set.global.size(); ++i) {
      csv << i << ',' << task.position_names[i] << ',' << format_double(set.global[i]);
      for (const auto& [cluster, curve] : set.per_cluster)
        csv << ',' << format_double(curve[i]);
      csv << '\n';
    }
    write_file(path, csv.str());
    add_artifact(path);

    if (!set.windowed_global.empty()) {
      fs::path wpath = path;
      wpath.replace_filename(path.stem().string() + "_windowed.csv");
      std::ostringstream w;
      w << "window,start,end,global";
      for (const auto& [cluster, curve] : set.windowed_per_cluster)
        w << ',' << cluster_column_name(task, cluster);
      w << '\n';
      for (std::size_t i = 0; i < set.windowed_global.size(); ++i) {
        std::size_t start = i * static_cast<std::size_t>(set.window);
        std::size_t end = std::min(task.time_len, start + static_cast<std::size_t>(set.window));
        w << i << ',' << start << ',' << end << ',' << format_double(set.windowed_global[i]);
        for (const auto& [cluster, curve] : set.windowed_per_cluster)
          w << ',' << format_double(curve[i]);
        w << '\n';
      }
      write_file(wpath, w.str());
      add_artifact(wpath);
    }

    if (cfg_.explain.emit_samples && !set.samples.empty()) {
      fs::path spath = path;
      spath.replace_filename(path.stem().string() + "_samples.csv");
      std::ostringstream s;
      s << "sample_id,class,base";
      for (const auto& name : task.position_names) s << ',' << name;
      s << '\n';
      for (const auto& a : set.samples) {
        s << a.sample_id << ',' << a.class_index << ',' << format_double(a.base_value);
        for (double v : a.values) s << ',' << format_double(v);
        s << '\n';
      }
      write_file(spath, s.str());
      add_artifact(spath);
    }
  }

  // ---- stage: report ---------------------------------------------------------

  void stage_report() {
    json rep;
    rep["dataset"] = cfg_.dataset.path;
    rep["note"] = "attributions target pre-softmax margins/logits";
    rep["config_hash"] = man_.config_hash;

    json validity_rows = json::array();
    for (const auto& lf : levels_) {
      json row;
      row["level"] = lf.name;
      row["k"] = lf.k;
      row["inertia"] = lf.inertia;
      if (lf.has_validity) {
        row["silhouette"] = lf.scores.silhouette;
        row["calinski_harabasz"] = lf.scores.calinski_harabasz;
        row["davies_bouldin"] = lf.scores.davies_bouldin;
      } else if (!lf.validity_error.empty()) {
        row["validity_error"] = lf.validity_error;
      }
      validity_rows.push_back(row);
    }
    rep["validity"] = validity_rows;
    if (!cand_ks_.empty()) {
      rep["elbow"] = {{"candidates", cand_ks_}, {"selected", k_medium_}};
      json inert = json::array();
      for (double v : cand_inertias_) inert.push_back(v);
      rep["elbow"]["inertias"] = inert;
    }

    fs::path res_path = out_ / "classification_results.csv";
    std::vector<ResultRow> rows;
    if (fs::exists(res_path)) rows = parse_results(res_path);
    json class_rows = json::array();
    for (const auto& r : rows) {
      class_rows.push_back({{"dataset", r.dataset},
                            {"level", r.level},
                            {"k_before", r.k_before},
                            {"k_after", r.k_after},
                            {"v", r.v},
                            {"config", r.config},
                            {"model", r.model},
                            {"params", r.params},
                            {"f1", {{"mean", r.f1_m}, {"std", r.f1_s}}},
                            {"accuracy", {{"mean", r.acc_m}, {"std", r.acc_s}}},
                            {"precision", {{"mean", r.prec_m}, {"std", r.prec_s}}},
                            {"recall", {{"mean", r.rec_m}, {"std", r.rec_s}}}});
    }
    rep["classification"] = class_rows;

    // Explanation agreement + figures, from the emitted CSV artifacts.
    struct LoadedSet {
      ModelKind model;
      ExplainMethod method;
      std::vector<std::string> names;
      Series global;
      std::map<std::string, Series> per_cluster;  // column name -> curve
    };
    json agreement = json::array();
    for (InputConfig config : cfg_.classification.configs) {
      std::vector<LoadedSet> sets;
      for (ExplainMethod m : cfg_.explain.methods) {
        ModelKind need = method_uses_gbt(m) ? ModelKind::gbt : ModelKind::fcn;
        fs::path p = explain_csv_path(config, need, m);
        if (!fs::exists(p)) continue;
        LoadedSet ls;
        ls.model = need;
        ls.method = m;
        load_explanation_csv(p, ls.names, ls.global, ls.per_cluster);
        sets.push_back(std::move(ls));
      }
      for (std::size_t a = 0; a < sets.size(); ++a)
        for (std::size_t b = a + 1; b < sets.size(); ++b) {
          if (sets[a].global.size() != sets[b].global.size()) continue;
          if (sets[a].global.size() < 2) continue;
          int k = std::min<int>(cfg_.explain.top_k,
                                static_cast<int>(sets[a].global.size()));
          RankAgreement ra = rank_agreement(sets[a].global, sets[b].global, k);
          agreement.push_back(
              {{"config", to_string(config)},
               {"a", to_string(sets[a].model) + "/" + to_string(sets[a].method)},
               {"b", to_string(sets[b].model) + "/" + to_string(sets[b].method)},
               {"spearman", ra.spearman},
               {"spearman_defined", ra.spearman_defined},
               {"topk_jaccard", ra.topk_jaccard},
               {"top_k", k}});
        }
      emit_explanation_figures(config, sets);
    }
    rep["agreement"] = agreement;

    if (!cand_ks_.empty()) emit_elbow_figure();

    fs::path rep_path = out_ / "report.json";
    write_file(rep_path, rep.dump(1) + "\n");
    add_artifact(rep_path);
  }

  std::vector<ResultRow> parse_results(const fs::path& path) const {
    std::vector<ResultRow> rows;
    std::istringstream in(read_file(path.string()));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != 16) throw std::runtime_error("bad row in " + path.string());
      ResultRow r;
      r.dataset = f[0];
      r.level = f[1];
      r.k_before = std::stoi(f[2]);
      r.k_after = std::stoi(f[3]);
      r.v = std::stoi(f[4]);
      r.config = f[5];
      r.model = f[6];
      r.params = f[7];
      double* nums[] = {&r.f1_m, &r.f1_s, &r.acc_m, &r.acc_s,
                        &r.prec_m, &r.prec_s, &r.rec_m, &r.rec_s};
      for (int i = 0; i < 8; ++i)
        if (!parse_double(f[static_cast<std::size_t>(8 + i)], *nums[i]))
          throw std::runtime_error("bad number in " + path.string());
      rows.push_back(std::move(r));
    }
    return rows;
  }

  void load_explanation_csv(const fs::path& path, std::vector<std::string>& names,
                            Series& global, std::map<std::string, Series>& per_cluster) const {
    std::istringstream in(read_file(path.string()));
    std::string line;
    std::getline(in, line);
    auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "position")
      throw std::runtime_error("bad explanation header in " + path.string());
    std::vector<std::string> cluster_cols(header.begin() + 3, header.end());
    for (const auto& c : cluster_cols) per_cluster[c] = {};
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() != header.size())
        throw std::runtime_error("bad explanation row in " + path.string());
      names.push_back(f[1]);
      double v = 0;
      if (!parse_double(f[2], v))
        throw std::runtime_error("bad number in " + path.string());
      global.push_back(v);
      for (std::size_t c = 0; c < cluster_cols.size(); ++c) {
        if (!parse_double(f[c + 3], v))
          throw std::runtime_error("bad number in " + path.string());
        per_cluster[cluster_cols[c]].push_back(v);
      }
    }
  }

  template <typename Sets>
  void emit_explanation_figures(InputConfig config, const Sets& sets) {
    if (sets.empty()) return;
    const LevelFit& medium = medium_level();
    // Time-position count: names "t0..t{T-1}" lead the axis when present.
    auto time_len_of = [](const std::vector<std::string>& names) {
      std::size_t n = 0;
      for (const auto& s : names) {
        if (s.size() >= 2 && s[0] == 't' &&
            s.find_first_not_of("0123456789", 1) == std::string::npos)
          ++n;
        else
          break;
      }
      return n;
    };
    std::set<std::string> cluster_names;
    for (const auto& ls : sets)
      for (const auto& [cname, curve] : ls.per_cluster) cluster_names.insert(cname);

    for (const auto& cname : cluster_names) {
      // Instances panel: members of this cluster at the medium level.
      int dense = -1;
      std::string suffix = cname.substr(cname.find_last_of('_') + 1);
      int orig = std::stoi(suffix);
      if (!medium.class_to_orig.empty()) {
        for (std::size_t i = 0; i < medium.class_to_orig.size(); ++i)
          if (medium.class_to_orig[i] == orig) dense = static_cast<int>(i);
      } else {
        dense = orig;
      }
      std::vector<SvgPanel> panels;
      SvgPanel inst;
      inst.title = "cluster " + suffix + " instances (gray) and mean (red)";
      Series mean_curve;
      std::size_t members = 0;
      for (std::size_t i = 0; i < pre_.size(); ++i) {
        if (medium.assignments[i] != dense) continue;
        ++members;
        if (mean_curve.empty()) mean_curve.assign(pre_.length(), 0.0);
        for (std::size_t t = 0; t < pre_.length(); ++t) mean_curve[t] += pre_.values[i][t];
        if (inst.curves.size() < 30)
          inst.curves.push_back({pre_.values[i], "#bbbbbb", 1.0, 0.7, ""});
      }
      if (members == 0) continue;
      for (auto& v : mean_curve) v /= static_cast<double>(members);
      inst.curves.push_back({mean_curve, "#d62728", 2.0, 1.0, "cluster mean"});
      panels.push_back(std::move(inst));

      bool any_track = false;
      for (const auto& ls : sets) {
        auto it = ls.per_cluster.find(cname);
        if (it == ls.per_cluster.end()) continue;
        std::size_t tl = time_len_of(ls.names);
        Series track;
        if (tl > 0 && cfg_.explain.window > 1) {
          Series time_part(it->second.begin(),
                           it->second.begin() + static_cast<std::ptrdiff_t>(tl));
          track = window_average(time_part, cfg_.explain.window);
          track.insert(track.end(), it->second.begin() + static_cast<std::ptrdiff_t>(tl),
                       it->second.end());
        } else {
          track = it->second;
        }
        SvgPanel p;
        p.title = to_string(ls.model) + " " + to_string(ls.method) +
                  " |attribution|, window " + std::to_string(cfg_.explain.window);
        p.curves.push_back({track, method_color(ls.method), 1.5, 1.0, to_string(ls.method)});
        panels.push_back(std::move(p));
        any_track = true;
      }
      if (!any_track) continue;
      std::string svg = render_line_svg(
          "config " + to_string(config) + ", cluster " + suffix, panels);
      fs::path p = out_ / "plots" /
                   ("explain_" + to_string(config) + "_cluster" + suffix + ".svg");
      fs::create_directories(p.parent_path());
      write_svg(p.string(), svg);
      add_artifact(p);
    }
  }

  void emit_elbow_figure() {
    SvgPanel panel;
    panel.title = "inertia vs k (candidates " + std::to_string(cand_ks_.front()) + ".." +
                  std::to_string(cand_ks_.back()) + ", selected k=" +
                  std::to_string(k_medium_) + ")";
    panel.curves.push_back({cand_inertias_, "#1f77b4", 2.0, 1.0, "inertia"});
    std::string svg = render_line_svg("elbow curve", {panel});
    fs::path p = out_ / "plots" / "elbow.svg";
    fs::create_directories(p.parent_path());
    write_svg(p.string(), svg);
    add_artifact(p);
  }

  // ---- manifest ---------------------------------------------------------------

  void write_manifest() {
    std::sort(man_.artifacts.begin(), man_.artifacts.end());
    man_.artifacts.erase(std::unique(man_.artifacts.begin(), man_.artifacts.end()),
                         man_.artifacts.end());
    json j;
    j["version"] = man_.version;
    j["config_hash"] = man_.config_hash;
    j["ok"] = man_.ok;
    if (!man_.failed_stage.empty()) j["failed_stage"] = man_.failed_stage;
    json stages = json::array();
    for (const auto& st : man_.stages) {
      json s;
      s["name"] = st.name;
      s["status"] = st.status;
      if (!st.error.empty()) s["error"] = st.error;
      s["seconds"] = st.seconds;
      stages.push_back(s);
    }
    j["stages"] = stages;
    j["artifacts"] = man_.artifacts;
    write_file(out_ / "manifest.json", j.dump(1) + "\n");
  }
};

}  // namespace

void RunConfig::validate() const {
  if (dataset.path.empty()) throw std::invalid_argument("config: dataset.path is required");
  if (dataset.sparse_threshold < 0 || dataset.sparse_threshold > 1)
    throw std::invalid_argument("config: sparse_threshold must be in [0,1]");
  if (!(dataset.scale_lo < dataset.scale_hi))
    throw std::invalid_argument("config: scale_range must be increasing");
  if (clustering.mode != "cluster" && clustering.mode != "labels_as_clusters")
    throw std::invalid_argument("config: unknown clustering.mode " + clustering.mode);
  if (clustering.algorithm != "kmeans" && clustering.algorithm != "kmedoids")
    throw std::invalid_argument("config: unknown clustering.algorithm " + clustering.algorithm);
  clustering.metric.validate();
  if (clustering.algorithm == "kmeans" && clustering.metric.kind != MetricKind::euclidean)
    throw std::invalid_argument("config: kmeans requires the euclidean metric");
  if (clustering.mode == "cluster") {
    if (clustering.auto_k) {
      if (clustering.candidates.size() < 2)
        throw std::invalid_argument("config: auto k needs at least 2 candidates");
      for (std::size_t i = 0; i + 1 < clustering.candidates.size(); ++i)
        if (clustering.candidates[i] >= clustering.candidates[i + 1])
          throw std::invalid_argument("config: candidates must be strictly increasing");
      if (clustering.candidates.front() < 2)
        throw std::invalid_argument("config: candidate k must be >= 2");
    } else if (clustering.k < 2) {
      throw std::invalid_argument("config: clustering.k must be >= 2 (or auto)");
    }
  }
  if (clustering.max_iter < 1) throw std::invalid_argument("config: max_iter must be >= 1");
  if (classification.models.empty())
    throw std::invalid_argument("config: at least one model required");
  if (classification.configs.empty())
    throw std::invalid_argument("config: at least one input config required");
  if (classification.seeds.empty())
    throw std::invalid_argument("config: at least one seed required");
  if (explain.window < 1) throw std::invalid_argument("config: explain.window must be >= 1");
  if (explain.top_k < 1) throw std::invalid_argument("config: explain.top_k must be >= 1");
  if (explain.gshap_samples < 1)
    throw std::invalid_argument("config: gshap_samples must be >= 1");
  if (explain.background_limit < 1)
    throw std::invalid_argument("config: background_limit must be >= 1");
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir is required");
}

RunConfig parse_run_config(const std::string& json_text) {
  json j = json::parse(json_text);
  RunConfig c;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.dataset.path = d.value("path", std::string());
    if (d.contains("slice")) {
      c.dataset.has_slice = true;
      c.dataset.slice_start = d.at("slice").at("start").get<std::size_t>();
      c.dataset.slice_len = d.at("slice").at("len").get<std::size_t>();
    }
    c.dataset.fill_missing = d.value("fill_missing", true);
    c.dataset.drop_sparse_rows = d.value("drop_sparse", true);
    c.dataset.sparse_threshold = d.value("sparse_threshold", 0.8);
    c.dataset.scale = d.value("scale", false);
    if (d.contains("scale_range")) {
      c.dataset.scale_lo = d.at("scale_range").at(0).get<double>();
      c.dataset.scale_hi = d.at("scale_range").at(1).get<double>();
    }
    c.dataset.drop_outliers = d.value("remove_outliers", false);
  }
  if (j.contains("clustering")) {
    const json& cl = j.at("clustering");
    c.clustering.mode = cl.value("mode", std::string("cluster"));
    c.clustering.algorithm = cl.value("algorithm", std::string("kmeans"));
    if (cl.contains("metric")) c.clustering.metric = metric_from_json(cl.at("metric"));
    if (cl.contains("k")) {
      if (cl.at("k").is_string()) {
        if (cl.at("k").get<std::string>() != "auto")
          throw std::invalid_argument("config: clustering.k must be an integer or \"auto\"");
        c.clustering.auto_k = true;
      } else {
        c.clustering.k = cl.at("k").get<int>();
      }
    }
    if (cl.value("auto", false)) c.clustering.auto_k = true;
    if (cl.contains("candidates"))
      c.clustering.candidates = cl.at("candidates").get<std::vector<int>>();
    c.clustering.max_iter = cl.value("max_iter", 300);
    c.clustering.plan = cl.value("plan", true);
  }
  if (j.contains("classification")) {
    const json& cf = j.at("classification");
    if (cf.contains("models")) {
      c.classification.models.clear();
      for (const auto& m : cf.at("models"))
        c.classification.models.push_back(model_kind_from_string(m.get<std::string>()));
    }
    if (cf.contains("configs")) {
      c.classification.configs.clear();
      for (const auto& ic : cf.at("configs"))
        c.classification.configs.push_back(input_config_from_string(ic.get<std::string>()));
    }
    c.classification.grid = cf.value("grid", false);
    if (cf.contains("seeds"))
      c.classification.seeds = cf.at("seeds").get<std::vector<int>>();
    if (cf.contains("params"))
      c.classification.base = hyperparams_from_json(cf.at("params"), HyperParams{});
  }
  if (j.contains("explain")) {
    const json& e = j.at("explain");
    if (e.contains("methods")) {
      c.explain.methods.clear();
      for (const auto& m : e.at("methods"))
        c.explain.methods.push_back(explain_method_from_string(m.get<std::string>()));
    }
    c.explain.window = e.value("window", 5);
    c.explain.top_k = e.value("top_k", 5);
    c.explain.emit_samples = e.value("emit_samples", false);
    c.explain.gshap_samples = e.value("gshap_samples", 200);
    c.explain.background_limit = e.value("background_limit", std::size_t{100});
  }
  c.output_dir = j.value("output_dir", std::string("out"));
  c.master_seed = j.value("master_seed", std::uint64_t{0});
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path));
}

std::string run_config_json(const RunConfig& c) {
  json j;
  {
    json d;
    d["path"] = c.dataset.path;
    if (c.dataset.has_slice)
      d["slice"] = {{"start", c.dataset.slice_start}, {"len", c.dataset.slice_len}};
    d["fill_missing"] = c.dataset.fill_missing;
    d["drop_sparse"] = c.dataset.drop_sparse_rows;
    d["sparse_threshold"] = c.dataset.sparse_threshold;
    d["scale"] = c.dataset.scale;
    d["scale_range"] = {c.dataset.scale_lo, c.dataset.scale_hi};
    d["remove_outliers"] = c.dataset.drop_outliers;
    j["dataset"] = d;
  }
  {
    json cl;
    cl["mode"] = c.clustering.mode;
    cl["algorithm"] = c.clustering.algorithm;
    cl["metric"] = metric_json(c.clustering.metric);
    if (c.clustering.auto_k)
      cl["k"] = "auto";
    else
      cl["k"] = c.clustering.k;
    cl["candidates"] = c.clustering.candidates;
    cl["max_iter"] = c.clustering.max_iter;
    cl["plan"] = c.clustering.plan;
    j["clustering"] = cl;
  }
  {
    json cf;
    json models = json::array(), configs = json::array();
    for (auto m : c.classification.models) models.push_back(to_string(m));
    for (auto ic : c.classification.configs) configs.push_back(to_string(ic));
    cf["models"] = models;
    cf["configs"] = configs;
    cf["grid"] = c.classification.grid;
    cf["seeds"] = c.classification.seeds;
    cf["params"] = hyperparams_json(c.classification.base);
    j["classification"] = cf;
  }
  {
    json e;
    json methods = json::array();
    for (auto m : c.explain.methods) methods.push_back(to_string(m));
    e["methods"] = methods;
    e["window"] = c.explain.window;
    e["top_k"] = c.explain.top_k;
    e["emit_samples"] = c.explain.emit_samples;
    e["gshap_samples"] = c.explain.gshap_samples;
    e["background_limit"] = c.explain.background_limit;
    j["explain"] = e;
  }
  // output_dir is deliberately not hashed: the same run into two directories
  // must produce identical artifacts, including the recorded config hash.
  j["master_seed"] = c.master_seed;
  return j.dump(1);
}

Stage stage_from_string(const std::string& s) {
  if (s == "preprocess") return Stage::preprocess;
  if (s == "selectk") return Stage::selectk;
  if (s == "cluster") return Stage::cluster;
  if (s == "classify") return Stage::classify;
  if (s == "explain") return Stage::explain_stage;
  if (s == "report" || s == "run") return Stage::report;
  throw std::invalid_argument("unknown stage: " + s);
}

RunManifest run_pipeline(const RunConfig& cfg, Stage upto) {
  Runner r(cfg, upto);
  return r.run();
}

}  // namespace tsce

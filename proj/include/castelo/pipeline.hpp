#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "castelo/clustering.hpp"
#include "castelo/contacts.hpp"
#include "castelo/cvae.hpp"
#include "castelo/error.hpp"
#include "castelo/geometry.hpp"
#include "castelo/io.hpp"
#include "castelo/ranking.hpp"
#include "castelo/subtypes.hpp"
#include "castelo/svg.hpp"
#include "castelo/types.hpp"

namespace castelo {

struct PipelineConfig {
  int version = 1;
  std::string topology_path;
  std::string trajectory_path;
  std::string workdir;
  double subtype_tolerance = 0.10;
  ContactConfig contacts;
  RefClusterConfig refcluster;
  HdbscanConfig hdbscan_cfg;
  TrainConfig train;
  std::vector<std::pair<int, int>> ensemble = default_ensemble();
  RankingOptions ranking;
  int jobs = 1;
};

inline PipelineConfig pipeline_config_from_json(const json& j) {
  PipelineConfig cfg;
  if (!j.contains("version")) fail(Errc::ConfigError, "config: missing 'version'");
  cfg.version = j["version"].get<int>();
  if (cfg.version != 1) fail(Errc::ConfigError, "config: unsupported version " + std::to_string(cfg.version));
  if (!j.contains("topology") || !j.contains("trajectory"))
    fail(Errc::ConfigError, "config: 'topology' and 'trajectory' are required");
  cfg.topology_path = j["topology"].get<std::string>();
  cfg.trajectory_path = j["trajectory"].get<std::string>();
  cfg.workdir = j.value("workdir", std::string());
  cfg.subtype_tolerance = j.value("subtype_tolerance", cfg.subtype_tolerance);
  if (j.contains("contacts")) {
    const auto& c = j["contacts"];
    cfg.contacts.cutoff = c.value("cutoff", cfg.contacts.cutoff);
    cfg.contacts.pocket_radius = c.value("pocket_radius", cfg.contacts.pocket_radius);
    cfg.contacts.heavy_atoms_only = c.value("heavy_atoms_only", cfg.contacts.heavy_atoms_only);
    cfg.contacts.all_protein = c.value("all_protein", cfg.contacts.all_protein);
    cfg.contacts.delta = c.value("delta", cfg.contacts.delta);
  }
  if (j.contains("refcluster")) {
    const auto& c = j["refcluster"];
    cfg.refcluster.rmsd_cutoff = c.value("rmsd_cutoff", cfg.refcluster.rmsd_cutoff);
    cfg.refcluster.max_clusters = c.value("max_clusters", cfg.refcluster.max_clusters);
  }
  if (j.contains("hdbscan")) {
    const auto& c = j["hdbscan"];
    cfg.hdbscan_cfg.min_cluster_size = c.value("min_cluster_size", cfg.hdbscan_cfg.min_cluster_size);
    cfg.hdbscan_cfg.min_samples = c.value("min_samples", cfg.hdbscan_cfg.min_samples);
  }
  if (j.contains("train")) {
    const auto& c = j["train"];
    cfg.train.learning_rate = c.value("learning_rate", cfg.train.learning_rate);
    cfg.train.rms_decay = c.value("rms_decay", cfg.train.rms_decay);
    cfg.train.rms_eps = c.value("rms_eps", cfg.train.rms_eps);
    cfg.train.max_epochs = c.value("max_epochs", cfg.train.max_epochs);
    cfg.train.patience = c.value("patience", cfg.train.patience);
    cfg.train.batch_size = c.value("batch_size", cfg.train.batch_size);
    cfg.train.kl_weight = c.value("kl_weight", cfg.train.kl_weight);
    cfg.train.seed = c.value("seed", cfg.train.seed);
  }
  if (j.contains("ensemble")) {
    cfg.ensemble.clear();
    for (const auto& e : j["ensemble"]) {
      if (!e.is_array() || e.size() != 2) fail(Errc::ConfigError, "config: ensemble entries must be [filters, latent_dim]");
      cfg.ensemble.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    if (cfg.ensemble.empty()) fail(Errc::ConfigError, "config: ensemble must not be empty");
  }
  if (j.contains("ranking")) {
    const auto& c = j["ranking"];
    cfg.ranking.reference_method = c.value("reference_method", cfg.ranking.reference_method);
    cfg.ranking.mean_centered = c.value("mean_centered", cfg.ranking.mean_centered);
    cfg.ranking.stability_threshold_ps = c.value("stability_threshold_ps", cfg.ranking.stability_threshold_ps);
  }
  cfg.jobs = j.value("jobs", cfg.jobs);
  if (cfg.jobs < 1) fail(Errc::ConfigError, "config: jobs must be at least 1");
  if (cfg.ranking.reference_method != "rmsd" && cfg.ranking.reference_method != "hdbscan")
    fail(Errc::ConfigError, "config: reference_method must be 'rmsd' or 'hdbscan'");
  validate_train_config(cfg.train);
  return cfg;
}

inline ordered_json pipeline_config_to_json(const PipelineConfig& cfg) {
  ordered_json j;
  j["version"] = cfg.version;
  j["topology"] = cfg.topology_path;
  j["trajectory"] = cfg.trajectory_path;
  j["workdir"] = cfg.workdir;
  j["subtype_tolerance"] = cfg.subtype_tolerance;
  j["contacts"] = {{"cutoff", cfg.contacts.cutoff},
                   {"pocket_radius", cfg.contacts.pocket_radius},
                   {"heavy_atoms_only", cfg.contacts.heavy_atoms_only},
                   {"all_protein", cfg.contacts.all_protein},
                   {"delta", cfg.contacts.delta}};
  j["refcluster"] = {{"rmsd_cutoff", cfg.refcluster.rmsd_cutoff}, {"max_clusters", cfg.refcluster.max_clusters}};
  j["hdbscan"] = {{"min_cluster_size", cfg.hdbscan_cfg.min_cluster_size}, {"min_samples", cfg.hdbscan_cfg.min_samples}};
  j["train"] = {{"learning_rate", cfg.train.learning_rate}, {"rms_decay", cfg.train.rms_decay},
                {"rms_eps", cfg.train.rms_eps},             {"max_epochs", cfg.train.max_epochs},
                {"patience", cfg.train.patience},           {"batch_size", cfg.train.batch_size},
                {"kl_weight", cfg.train.kl_weight},         {"seed", cfg.train.seed}};
  ordered_json ens = ordered_json::array();
  for (auto [f, d] : cfg.ensemble) ens.push_back({f, d});
  j["ensemble"] = std::move(ens);
  j["ranking"] = {{"reference_method", cfg.ranking.reference_method},
                  {"mean_centered", cfg.ranking.mean_centered},
                  {"stability_threshold_ps", cfg.ranking.stability_threshold_ps}};
  j["jobs"] = cfg.jobs;
  return j;
}

namespace detail {

class StageCache {
 public:
  // `root` is the workdir prefix; outputs are stored relative to it so the
  // cache file does not depend on where the workdir lives
  StageCache(const std::string& path, const std::string& root) : path_(path), root_(root) {
    if (std::filesystem::exists(path)) {
      json j = load_json(path);
      if (j.contains("stages"))
        for (auto it = j["stages"].begin(); it != j["stages"].end(); ++it)
          entries_[it.key()] = {it.value().value("key", std::string()),
                                it.value().value("outputs", std::vector<std::string>())};
    }
  }

  // a stage may be skipped when its input key matches and every output file
  // still exists
  bool fresh(const std::string& stage, const std::string& key, const std::vector<std::string>& outputs) const {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = entries_.find(stage);
      if (it == entries_.end() || it->second.key != key) return false;
    }
    for (const auto& p : outputs)
      if (!std::filesystem::exists(p)) return false;
    return true;
  }

  void record(const std::string& stage, const std::string& key, const std::vector<std::string>& outputs) {
    std::vector<std::string> rel;
    rel.reserve(outputs.size());
    for (const auto& p : outputs) rel.push_back(p.rfind(root_, 0) == 0 ? p.substr(root_.size()) : p);
    std::lock_guard<std::mutex> lock(mu_);
    entries_[stage] = {key, std::move(rel)};
  }

  void save() const {
    ordered_json j;
    j["version"] = 1;
    ordered_json stages = ordered_json::object();
    for (const auto& [name, e] : entries_) stages[name] = {{"key", e.key}, {"outputs", e.outputs}};
    j["stages"] = std::move(stages);
    save_json(path_, j);
  }

 private:
  struct Entry {
    std::string key;
    std::vector<std::string> outputs;
  };
  std::string path_;
  std::string root_;
  std::map<std::string, Entry> entries_;
  mutable std::mutex mu_;
};

struct StageLogger {
  std::ostream* out;
  std::mutex mu;

  void log(const std::string& stage, bool cached, double wall_ms, const std::string& key,
           const std::vector<std::string>& outputs, const std::string& error = std::string()) {
    if (!out) return;
    ordered_json j;
    j["stage"] = stage;
    j["cached"] = cached;
    j["wall_ms"] = wall_ms;
    j["input_key"] = key;
    ordered_json oh = ordered_json::array();
    for (const auto& p : outputs)
      if (std::filesystem::exists(p)) oh.push_back({{"path", p}, {"hash", hash_file(p)}});
    j["outputs"] = std::move(oh);
    if (!error.empty()) j["error"] = error;
    std::lock_guard<std::mutex> lock(mu);
    (*out) << j.dump() << "\n";
  }
};

inline std::string stage_key(std::initializer_list<std::string> parts) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : parts) {
    h = fnv1a64(p.data(), p.size(), h);
    h = fnv1a64("|", 1, h);
  }
  return hash_hex(h);
}

// run `fn` for every index in [0, n) on `jobs` threads; first exception wins
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto worker = [&] {
    for (;;) {
      int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int nt = std::min(jobs, n);
  pool.reserve(nt);
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct TrainTask {
  std::string tag;       // "s<k>" or "whole"
  int subtype_id = -1;   // -1 for the whole-molecule task
  int filters = 0;
  int latent_dim = 0;
  std::string input_base;
  std::string ckpt_path, latent_base, losses_path, labels_path, sizes_path;
  std::uint64_t seed = 0;
};

}  // namespace detail

// Runs the full analysis: subtype map, pocket featurization, reference
// clustering, ensemble training, latent clustering, ranking, rendering.
// Artifacts land under cfg.workdir; completed stages whose inputs did not
// change are skipped on reruns.
inline RankingReport run_pipeline(const PipelineConfig& cfg, std::ostream* log_stream = &std::cerr) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;
  if (cfg.workdir.empty()) fail(Errc::ConfigError, "no workdir configured (flag, config field, or CASTELO_WORKDIR)");
  fs::create_directories(cfg.workdir);
  const std::string wd = cfg.workdir + "/";

  detail::StageCache cache(wd + "cache.json", wd);
  detail::StageLogger logger{log_stream, {}};
  auto run_stage = [&](const std::string& name, const std::string& key, const std::vector<std::string>& outputs,
                       const std::function<void()>& body) {
    auto t0 = clock::now();
    bool cached = cache.fresh(name, key, outputs);
    if (!cached) {
      body();
      cache.record(name, key, outputs);
    }
    double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    logger.log(name, cached, ms, key, outputs);
  };

  const std::string topo_hash = hash_file(cfg.topology_path);
  const std::string traj_hash = hash_file(cfg.trajectory_path);
  Topology topo = parse_topology(cfg.topology_path);
  TrajectoryFrameSeries traj = parse_trajectory(cfg.trajectory_path, topo);
  const std::vector<int> ligand = topo.ligand_indices();
  const int T = traj.frame_count;

  ordered_json cfg_json = pipeline_config_to_json(cfg);
  const std::string contacts_cfg = cfg_json["contacts"].dump();
  const std::string train_cfg_str = cfg_json["train"].dump() + cfg_json["ensemble"].dump();

  // subtype map
  SubtypeMap subtype_map;
  run_stage("subtypes", detail::stage_key({topo_hash, fmt_shortest(cfg.subtype_tolerance)}), {wd + "subtypes.json"},
            [&] { save_json(wd + "subtypes.json", subtype_map_to_json(build_subtype_map(topo, cfg.subtype_tolerance))); });
  subtype_map = subtype_map_from_json(load_json(wd + "subtypes.json"));
  const int K = subtype_map.subtype_count();

  // pocket selection + per-subtype input tensors
  const bool want_whole = cfg.ranking.reference_method == "hdbscan";
  std::vector<std::string> feat_outputs{wd + "selection.json"};
  for (int k = 0; k < K; ++k) {
    feat_outputs.push_back(wd + "inputs/subtype_" + std::to_string(k) + ".f32");
    feat_outputs.push_back(wd + "inputs/subtype_" + std::to_string(k) + ".json");
  }
  if (want_whole) {
    feat_outputs.push_back(wd + "inputs/whole.f32");
    feat_outputs.push_back(wd + "inputs/whole.json");
  }
  const std::string feat_key =
      detail::stage_key({topo_hash, traj_hash, contacts_cfg, fmt_shortest(cfg.subtype_tolerance),
                         want_whole ? "whole" : "subtypes-only"});
  run_stage("featurize", feat_key, feat_outputs, [&] {
    ProteinSelection sel = select_pocket(traj, topo, cfg.contacts);
    save_json(wd + "selection.json", selection_to_json(sel));
    std::vector<BitMatrix> contacts = contact_series(traj, topo, ligand, sel, cfg.contacts);
    std::vector<DynamismTensor> series = dynamism_series(contacts, cfg.contacts.delta);
    for (int k = 0; k < K; ++k)
      write_tensor(build_subtype_inputs(series, ligand, subtype_map, k), wd + "inputs/subtype_" + std::to_string(k));
    if (want_whole) write_tensor(build_whole_inputs(series), wd + "inputs/whole");
  });
  ProteinSelection sel = selection_from_json(load_json(wd + "selection.json"));

  // per-subtype fluctuation profile (used by the report stage)
  run_stage("rmsf", detail::stage_key({topo_hash, traj_hash, feat_key}), {wd + "rmsf.csv"},
            [&] { write_rmsf_csv(subtype_rmsf(traj, subtype_map, sel.indices), wd + "rmsf.csv"); });

  // reference clustering on ligand RMSD
  const std::string ref_key = detail::stage_key(
      {topo_hash, traj_hash, contacts_cfg, fmt_shortest(cfg.refcluster.rmsd_cutoff),
       std::to_string(cfg.refcluster.max_clusters)});
  run_stage("refcluster", ref_key,
            {wd + "refcluster/rmsd_matrix.f32", wd + "refcluster/rmsd_matrix.json", wd + "refcluster/labels.csv",
             wd + "refcluster/sizes.csv"},
            [&] {
              // the condensed matrix is cached as its own artifact because it
              // dominates the stage cost
              TensorF m;
              std::string mkey = detail::stage_key({topo_hash, traj_hash, contacts_cfg});
              if (cache.fresh("rmsd_matrix", mkey, {wd + "refcluster/rmsd_matrix.f32"})) {
                m = read_tensor(wd + "refcluster/rmsd_matrix");
              } else {
                std::vector<float> condensed = rmsd_matrix(traj, sel.indices, ligand);
                m.dims = {static_cast<std::int64_t>(condensed.size())};
                m.data = std::move(condensed);
                write_tensor(m, wd + "refcluster/rmsd_matrix");
                cache.record("rmsd_matrix", mkey, {wd + "refcluster/rmsd_matrix.f32"});
              }
              ClusterLabels ref = rmsd_qt_from_matrix(m.data, T, cfg.refcluster);
              write_labels_csv(ref.labels, wd + "refcluster/labels.csv");
              write_size_series(size_series(ref), wd + "refcluster/sizes.csv");
            });

  // training + latent clustering tasks
  std::vector<detail::TrainTask> tasks;
  for (int k = 0; k < K; ++k)
    for (auto [f, d] : cfg.ensemble) {
      detail::TrainTask t;
      t.tag = "s" + std::to_string(k);
      t.subtype_id = k;
      t.filters = f;
      t.latent_dim = d;
      t.input_base = wd + "inputs/subtype_" + std::to_string(k);
      std::string stem = wd + "train/s" + std::to_string(k) + "_f" + std::to_string(f) + "_d" + std::to_string(d);
      t.ckpt_path = stem + ".ckpt";
      t.latent_base = stem + "_latent";
      t.losses_path = stem + "_losses.csv";
      std::string cstem = wd + "cluster/s" + std::to_string(k) + "_f" + std::to_string(f) + "_d" + std::to_string(d);
      t.labels_path = cstem + "_labels.csv";
      t.sizes_path = cstem + "_sizes.csv";
      t.seed = derive_seed(derive_seed(cfg.train.seed, 1000 + static_cast<std::uint64_t>(k)),
                           (static_cast<std::uint64_t>(f) << 32) | static_cast<std::uint64_t>(d));
      tasks.push_back(std::move(t));
    }
  if (want_whole)
    for (auto [f, d] : cfg.ensemble) {
      detail::TrainTask t;
      t.tag = "whole";
      t.filters = f;
      t.latent_dim = d;
      t.input_base = wd + "inputs/whole";
      std::string stem = wd + "train/whole_f" + std::to_string(f) + "_d" + std::to_string(d);
      t.ckpt_path = stem + ".ckpt";
      t.latent_base = stem + "_latent";
      t.losses_path = stem + "_losses.csv";
      std::string cstem = wd + "cluster/whole_f" + std::to_string(f) + "_d" + std::to_string(d);
      t.labels_path = cstem + "_labels.csv";
      t.sizes_path = cstem + "_sizes.csv";
      t.seed = derive_seed(derive_seed(cfg.train.seed, 0x77686f6c65ull),
                           (static_cast<std::uint64_t>(f) << 32) | static_cast<std::uint64_t>(d));
      tasks.push_back(std::move(t));
    }

  std::vector<std::string> task_errors(tasks.size());
  detail::parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int i) {
    const auto& t = tasks[i];
    std::string name = "train/" + t.tag + "_f" + std::to_string(t.filters) + "_d" + std::to_string(t.latent_dim);
    std::string input_hash = hash_file(t.input_base + ".f32");
    std::string key = detail::stage_key({input_hash, std::to_string(t.filters), std::to_string(t.latent_dim),
                                         train_cfg_str, std::to_string(t.seed),
                                         std::to_string(cfg.hdbscan_cfg.min_cluster_size),
                                         std::to_string(cfg.hdbscan_cfg.min_samples)});
    std::vector<std::string> outputs{t.ckpt_path,   t.latent_base + ".f32", t.latent_base + ".json",
                                     t.losses_path, t.labels_path,          t.sizes_path};
    auto t0 = clock::now();
    bool cached = cache.fresh(name, key, outputs);
    if (!cached) {
      try {
        TensorF inputs = read_tensor(t.input_base);
        TrainConfig tc = cfg.train;
        tc.seed = t.seed;
        CvaeArch arch;
        arch.filters = t.filters;
        arch.latent_dim = t.latent_dim;
        TrainResult<float> res = train<float>(inputs, arch, tc);
        save_checkpoint(res.params, tc, res.best_epoch, res.latent.final_loss, t.ckpt_path);
        write_tensor(latent_to_tensor(res.latent), t.latent_base);
        write_loss_curve(res.curve, t.losses_path);
        ClusterLabels cl = hdbscan(res.latent.mu.data(), res.latent.frames, res.latent.latent_dim, cfg.hdbscan_cfg);
        write_labels_csv(cl.labels, t.labels_path);
        write_size_series(size_series(cl), t.sizes_path);
        cache.record(name, key, outputs);
      } catch (const Error& e) {
        if (e.code() != Errc::Diverged && e.code() != Errc::NonFiniteActivation) throw;
        task_errors[i] = e.what();
        double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        logger.log(name, false, ms, key, {}, e.what());
        return;
      }
    }
    double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    logger.log(name, cached, ms, key, outputs);
  });

  // reference series
  std::vector<std::int64_t> reference;
  if (cfg.ranking.reference_method == "rmsd") {
    reference = read_size_series(wd + "refcluster/sizes.csv");
  } else {
    // whole-molecule latent clustering of the first architecture that trained
    const auto [f0, d0] = cfg.ensemble.front();
    bool found = false;
    for (std::size_t i = 0; i < tasks.size() && !found; ++i)
      if (tasks[i].tag == "whole" && task_errors[i].empty() && tasks[i].filters == f0 && tasks[i].latent_dim == d0) {
        reference = read_size_series(tasks[i].sizes_path);
        found = true;
      }
    if (!found) {
      for (std::size_t i = 0; i < tasks.size() && !found; ++i)
        if (tasks[i].tag == "whole" && task_errors[i].empty()) {
          reference = read_size_series(tasks[i].sizes_path);
          found = true;
        }
    }
    if (!found) fail(Errc::Diverged, "every whole-molecule architecture diverged; no reference series");
  }
  bool reference_stable = false;
  {
    std::int64_t largest = 0;
    for (auto s : reference) largest = std::max(largest, s);
    reference_stable = static_cast<double>(largest) * traj.frame_stride_ps() >= cfg.ranking.stability_threshold_ps;
  }

  // ranking
  RankingReport report;
  {
    std::vector<SubtypeSeries> series;
    std::vector<std::string> failures;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].subtype_id < 0) continue;
      if (!task_errors[i].empty()) {
        failures.push_back("s" + std::to_string(tasks[i].subtype_id) + "_f" + std::to_string(tasks[i].filters) +
                           "_d" + std::to_string(tasks[i].latent_dim) + ": " + task_errors[i]);
        continue;
      }
      SubtypeSeries s;
      s.subtype_id = tasks[i].subtype_id;
      s.filters = tasks[i].filters;
      s.latent_dim = tasks[i].latent_dim;
      s.sizes = read_size_series(tasks[i].sizes_path);
      series.push_back(std::move(s));
    }
    std::vector<char> has_series(K, 0);
    for (const auto& s : series) has_series[s.subtype_id] = 1;
    for (int k = 0; k < K; ++k)
      if (!has_series[k])
        fail(Errc::Diverged, "every architecture diverged for subtype " + std::to_string(k), k);
    report = rank_subtypes(series, reference, cfg.ranking, reference_stable);

    ordered_json rj = report_to_json(report);
    rj["training_failures"] = failures;
    save_json(wd + "report.json", rj);
    write_file_atomic(wd + "report.csv", report_to_csv(report));
    logger.log("rank", false, 0.0, detail::stage_key({train_cfg_str}), {wd + "report.json", wd + "report.csv"});
  }

  // plots: size strips, metric bars, latent scatter per subtype
  {
    std::vector<std::string> svg_outputs{wd + "svg/size_strips.svg", wd + "svg/metrics.svg",
                                         wd + "rmsf_scatter.json"};
    for (int k = 0; k < K; ++k) svg_outputs.push_back(wd + "svg/latent_s" + std::to_string(k) + ".svg");
    auto t0 = clock::now();

    std::vector<HeatStrip> strips;
    {
      HeatStrip ref_strip;
      ref_strip.label = "reference";
      for (auto v : reference) ref_strip.values.push_back(static_cast<double>(v));
      strips.push_back(std::move(ref_strip));
      for (int k = 0; k < K; ++k) {
        std::vector<std::vector<std::int64_t>> per_arch;
        for (std::size_t i = 0; i < tasks.size(); ++i)
          if (tasks[i].subtype_id == k && task_errors[i].empty())
            per_arch.push_back(read_size_series(tasks[i].sizes_path));
        HeatStrip s;
        s.label = "subtype " + std::to_string(k);
        s.values = average_size_series(per_arch);
        strips.push_back(std::move(s));
      }
    }
    write_file_atomic(wd + "svg/size_strips.svg", render_heat_strips(strips));
    write_file_atomic(wd + "svg/metrics.svg", render_metric_bars(report));

    for (int k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].subtype_id != k || !task_errors[i].empty()) continue;
        TensorF latent = read_tensor(tasks[i].latent_base);
        std::vector<int> labels = read_labels_csv(tasks[i].labels_path);
        PcaResult pca = pca_project(latent.data.data(), static_cast<int>(latent.dims[0]),
                                    static_cast<int>(latent.dims[1]));
        write_file_atomic(wd + "svg/latent_s" + std::to_string(k) + ".svg",
                          render_pca_scatter(pca.projection, labels));
        break;
      }
    }

    ScatterTable scatter = metric_rmsf_scatter(report, read_rmsf_csv(wd + "rmsf.csv"));
    ordered_json sj;
    sj["version"] = 1;
    ordered_json rows = ordered_json::array();
    for (const auto& row : scatter.rows)
      rows.push_back({{"subtype_id", row.subtype_id},
                      {"cossim_mean", row.cossim_mean},
                      {"avgdiff_mean", row.avgdiff_mean},
                      {"rmsf", row.rmsf}});
    sj["rows"] = std::move(rows);
    sj["r2_cossim"] = scatter.r2_cossim;
    sj["r2_avgdiff"] = scatter.r2_avgdiff;
    save_json(wd + "rmsf_scatter.json", sj);

    double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    logger.log("render", false, ms, detail::stage_key({train_cfg_str, ref_key}), svg_outputs);
  }

  cache.save();
  return report;
}

}  // namespace castelo

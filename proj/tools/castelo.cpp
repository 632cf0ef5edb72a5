// Command line front end. Every subcommand wraps one stage of the analysis;
// `run` chains them all with caching. Errors print a single JSON line on
// stderr and map to stable exit codes.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "castelo/fep.hpp"
#include "castelo/pipeline.hpp"
#include "castelo/synthgen.hpp"

namespace {

using namespace castelo;

std::string default_workdir(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("CASTELO_WORKDIR")) return env;
  return "";
}

std::string require_workdir(const std::string& flag_value) {
  std::string wd = default_workdir(flag_value);
  if (wd.empty()) fail(Errc::ConfigError, "no workdir given (use --workdir or CASTELO_WORKDIR)");
  return wd;
}

void emit(const ordered_json& j) { std::cout << j.dump() << "\n"; }

int run_cli(int argc, char** argv) {
  CLI::App app{"contact-dynamism subtype analysis for ligand trajectories"};
  app.require_subcommand(1);

  // ---- synth ----------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic topology + trajectory with planted dynamics");
  std::string synth_spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  bool synth_seed_set = false;
  int synth_frames = 0;
  synth->add_option("--spec", synth_spec_path, "generator spec JSON (defaults used when omitted)");
  synth->add_option("--out-dir", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the spec seed")->each([&](const std::string&) { synth_seed_set = true; });
  synth->add_option("--frames", synth_frames, "override the spec frame count");
  synth->callback([&] {
    SynthSpec spec;
    if (!synth_spec_path.empty()) spec = synth_spec_from_json(load_json(synth_spec_path, Errc::InvalidSpec));
    if (spec.subtype_plan.empty())
      spec.subtype_plan = {{4, 0.0}, {4, 0.0}, {4, 0.45}, {4, 0.0}};
    if (synth_seed_set) spec.seed = synth_seed;
    if (synth_frames > 0) spec.frames = synth_frames;
    SynthResult res = generate(spec);
    std::filesystem::create_directories(synth_out);
    write_topology(res.topology, synth_out + "/topology.json");
    write_trajectory(res.trajectory, res.topology, synth_out + "/trajectory.xyz");
    write_ground_truth(res.ground_truth, synth_out + "/ground_truth.json");
    save_json(synth_out + "/spec.json", synth_spec_to_json(spec));
    emit({{"topology", synth_out + "/topology.json"},
          {"trajectory", synth_out + "/trajectory.xyz"},
          {"ground_truth", synth_out + "/ground_truth.json"},
          {"atoms", static_cast<int>(res.topology.atoms.size())},
          {"frames", res.trajectory.frame_count}});
  });

  // ---- subtype --------------------------------------------------------
  auto* subtype = app.add_subcommand("subtype", "group ligand atom types by Lennard-Jones similarity");
  std::string st_topo, st_out;
  double st_tol = 0.10;
  subtype->add_option("--topology", st_topo)->required();
  subtype->add_option("--out", st_out, "output subtypes.json")->required();
  subtype->add_option("--tolerance", st_tol, "relative parameter tolerance");
  subtype->callback([&] {
    Topology topo = parse_topology(st_topo);
    SubtypeMap map = build_subtype_map(topo, st_tol);
    save_json(st_out, subtype_map_to_json(map));
    emit({{"subtypes", map.subtype_count()}, {"out", st_out}});
  });

  // ---- contacts -------------------------------------------------------
  auto* contacts = app.add_subcommand("contacts", "build pocket selection and per-subtype input tensors");
  std::string ct_topo, ct_traj, ct_wd, ct_subtypes;
  ContactConfig ct_cfg;
  bool ct_whole = false;
  contacts->add_option("--topology", ct_topo)->required();
  contacts->add_option("--trajectory", ct_traj)->required();
  contacts->add_option("--subtypes", ct_subtypes, "subtypes.json from the subtype step")->required();
  contacts->add_option("--workdir", ct_wd);
  contacts->add_option("--cutoff", ct_cfg.cutoff, "contact distance, angstrom");
  contacts->add_option("--pocket-radius", ct_cfg.pocket_radius, "pocket shell radius, angstrom");
  contacts->add_option("--delta", ct_cfg.delta, "frame lag for the dynamism channel");
  contacts->add_flag("--heavy-only", ct_cfg.heavy_atoms_only, "drop hydrogen rows/columns");
  contacts->add_flag("--all-protein", ct_cfg.all_protein, "use every protein atom instead of the pocket shell");
  contacts->add_flag("--whole", ct_whole, "also write the whole-molecule tensor");
  contacts->callback([&] {
    std::string wd = require_workdir(ct_wd) + "/";
    Topology topo = parse_topology(ct_topo);
    TrajectoryFrameSeries traj = parse_trajectory(ct_traj, topo);
    SubtypeMap map = subtype_map_from_json(load_json(ct_subtypes));
    std::vector<int> ligand = topo.ligand_indices();
    ProteinSelection sel = select_pocket(traj, topo, ct_cfg);
    std::filesystem::create_directories(wd + "inputs");
    save_json(wd + "selection.json", selection_to_json(sel));
    std::vector<BitMatrix> series = contact_series(traj, topo, ligand, sel, ct_cfg);
    std::vector<DynamismTensor> dyn = dynamism_series(series, ct_cfg.delta);
    for (int k = 0; k < map.subtype_count(); ++k)
      write_tensor(build_subtype_inputs(dyn, ligand, map, k), wd + "inputs/subtype_" + std::to_string(k));
    if (ct_whole) write_tensor(build_whole_inputs(dyn), wd + "inputs/whole");
    emit({{"selection_size", sel.size()}, {"subtypes", map.subtype_count()}, {"frames", traj.frame_count}});
  });

  // ---- refcluster -----------------------------------------------------
  auto* refc = app.add_subcommand("refcluster", "reference clustering on pocket-aligned ligand RMSD");
  std::string rc_topo, rc_traj, rc_wd;
  RefClusterConfig rc_cfg;
  refc->add_option("--topology", rc_topo)->required();
  refc->add_option("--trajectory", rc_traj)->required();
  refc->add_option("--workdir", rc_wd);
  refc->add_option("--rmsd-cutoff", rc_cfg.rmsd_cutoff, "cluster radius, angstrom");
  refc->add_option("--max-clusters", rc_cfg.max_clusters);
  refc->callback([&] {
    std::string wd = require_workdir(rc_wd) + "/";
    Topology topo = parse_topology(rc_topo);
    TrajectoryFrameSeries traj = parse_trajectory(rc_traj, topo);
    ProteinSelection sel;
    if (std::filesystem::exists(wd + "selection.json"))
      sel = selection_from_json(load_json(wd + "selection.json"));
    else
      sel = select_pocket(traj, topo, ContactConfig{});
    std::filesystem::create_directories(wd + "refcluster");
    std::vector<float> condensed = rmsd_matrix(traj, sel.indices, topo.ligand_indices());
    TensorF m;
    m.dims = {static_cast<std::int64_t>(condensed.size())};
    m.data = std::move(condensed);
    write_tensor(m, wd + "refcluster/rmsd_matrix");
    ClusterLabels ref = rmsd_qt_from_matrix(m.data, traj.frame_count, rc_cfg);
    write_labels_csv(ref.labels, wd + "refcluster/labels.csv");
    write_size_series(size_series(ref), wd + "refcluster/sizes.csv");
    emit({{"clusters", ref.cluster_count}, {"labels", wd + "refcluster/labels.csv"}});
  });

  // ---- train ----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train one encoder-decoder on an input tensor");
  std::string tr_input, tr_out;
  TrainConfig tr_cfg;
  CvaeArch tr_arch;
  train_cmd->add_option("--input", tr_input, "input tensor base path (without .f32)")->required();
  train_cmd->add_option("--out", tr_out, "output stem; writes <stem>.ckpt, <stem>_latent.*, <stem>_losses.csv")->required();
  train_cmd->add_option("--filters", tr_arch.filters);
  train_cmd->add_option("--latent-dim", tr_arch.latent_dim);
  train_cmd->add_option("--seed", tr_cfg.seed);
  train_cmd->add_option("--learning-rate", tr_cfg.learning_rate);
  train_cmd->add_option("--max-epochs", tr_cfg.max_epochs);
  train_cmd->add_option("--patience", tr_cfg.patience);
  train_cmd->add_option("--batch-size", tr_cfg.batch_size);
  train_cmd->add_option("--kl-weight", tr_cfg.kl_weight);
  train_cmd->callback([&] {
    validate_train_config(tr_cfg);
    TensorF inputs = read_tensor(tr_input);
    TrainResult<float> res = train<float>(inputs, tr_arch, tr_cfg);
    ensure_parent_dir(tr_out + ".ckpt");
    save_checkpoint(res.params, tr_cfg, res.best_epoch, res.latent.final_loss, tr_out + ".ckpt");
    write_tensor(latent_to_tensor(res.latent), tr_out + "_latent");
    write_loss_curve(res.curve, tr_out + "_losses.csv");
    emit({{"best_epoch", res.best_epoch},
          {"epochs_run", res.epochs_run},
          {"final_loss", res.latent.final_loss},
          {"checkpoint", tr_out + ".ckpt"}});
  });

  // ---- cluster --------------------------------------------------------
  auto* cluster_cmd = app.add_subcommand("cluster", "density clustering of a latent tensor");
  std::string cl_latent, cl_out;
  HdbscanConfig cl_cfg;
  cluster_cmd->add_option("--latent", cl_latent, "latent tensor base path (without .f32)")->required();
  cluster_cmd->add_option("--out", cl_out, "output stem; writes <stem>_labels.csv and <stem>_sizes.csv")->required();
  cluster_cmd->add_option("--min-cluster-size", cl_cfg.min_cluster_size);
  cluster_cmd->add_option("--min-samples", cl_cfg.min_samples);
  cluster_cmd->callback([&] {
    TensorF latent = read_tensor(cl_latent);
    if (latent.dims.size() != 2) fail(Errc::ShapeMismatch, "latent tensor must be rank 2");
    ClusterLabels cl = hdbscan(latent.data.data(), static_cast<int>(latent.dims[0]),
                               static_cast<int>(latent.dims[1]), cl_cfg);
    ensure_parent_dir(cl_out + "_labels.csv");
    write_labels_csv(cl.labels, cl_out + "_labels.csv");
    write_size_series(size_series(cl), cl_out + "_sizes.csv");
    emit({{"clusters", cl.cluster_count},
          {"noise", static_cast<std::int64_t>(std::count(cl.labels.begin(), cl.labels.end(), -1))}});
  });

  // ---- rank -----------------------------------------------------------
  auto* rank_cmd = app.add_subcommand("rank", "score per-subtype size series against a reference series");
  std::string rk_ref, rk_out, rk_csv;
  std::vector<std::string> rk_series;
  RankingOptions rk_opts;
  double rk_stride = 20.0;
  rank_cmd->add_option("--reference", rk_ref, "reference sizes.csv")->required();
  rank_cmd->add_option("--series", rk_series, "repeatable: <subtype_id>:<filters>:<latent_dim>:<sizes.csv>")->required();
  rank_cmd->add_option("--out", rk_out, "report JSON path")->required();
  rank_cmd->add_option("--csv", rk_csv, "optional report CSV path");
  rank_cmd->add_flag("--mean-centered", rk_opts.mean_centered, "subtract series means before the cosine");
  rank_cmd->add_option("--stability-threshold-ps", rk_opts.stability_threshold_ps);
  rank_cmd->add_option("--frame-stride-ps", rk_stride, "frame spacing used for the stability check");
  rank_cmd->callback([&] {
    std::vector<std::int64_t> reference = read_size_series(rk_ref);
    std::vector<SubtypeSeries> series;
    for (const auto& spec : rk_series) {
      SubtypeSeries s;
      std::size_t a = spec.find(':'), b = spec.find(':', a + 1), c = spec.find(':', b + 1);
      long id = 0, f = 0, d = 0;
      if (a == std::string::npos || b == std::string::npos || c == std::string::npos ||
          !parse_long(spec.substr(0, a), id) || !parse_long(spec.substr(a + 1, b - a - 1), f) ||
          !parse_long(spec.substr(b + 1, c - b - 1), d))
        fail(Errc::ConfigError, "--series expects <subtype_id>:<filters>:<latent_dim>:<path>, got '" + spec + "'");
      s.subtype_id = static_cast<int>(id);
      s.filters = static_cast<int>(f);
      s.latent_dim = static_cast<int>(d);
      s.sizes = read_size_series(spec.substr(c + 1));
      series.push_back(std::move(s));
    }
    std::int64_t largest = 0;
    for (auto v : reference) largest = std::max(largest, v);
    bool stable = static_cast<double>(largest) * rk_stride >= rk_opts.stability_threshold_ps;
    RankingReport report = rank_subtypes(series, reference, rk_opts, stable);
    save_json(rk_out, report_to_json(report));
    if (!rk_csv.empty()) write_file_atomic(rk_csv, report_to_csv(report));
    ordered_json order = ordered_json::array();
    for (int id : report.rank_order) order.push_back(id);
    emit({{"rank_order", order}, {"reference_stable", report.reference_stable}, {"out", rk_out}});
  });

  // ---- report ---------------------------------------------------------
  auto* report_cmd = app.add_subcommand("report", "render plots and the fluctuation scatter for a report");
  std::string rp_report, rp_rmsf, rp_dir;
  report_cmd->add_option("--report", rp_report, "report.json from rank")->required();
  report_cmd->add_option("--rmsf", rp_rmsf, "rmsf.csv with per-subtype fluctuations");
  report_cmd->add_option("--out-dir", rp_dir, "directory for SVG output")->required();
  report_cmd->callback([&] {
    RankingReport report = report_from_json(load_json(rp_report));
    std::filesystem::create_directories(rp_dir);
    write_file_atomic(rp_dir + "/metrics.svg", render_metric_bars(report));
    ordered_json out{{"metrics_svg", rp_dir + "/metrics.svg"}};
    if (!rp_rmsf.empty()) {
      ScatterTable scatter = metric_rmsf_scatter(report, read_rmsf_csv(rp_rmsf));
      ordered_json rows = ordered_json::array();
      for (const auto& row : scatter.rows)
        rows.push_back({{"subtype_id", row.subtype_id},
                        {"cossim_mean", row.cossim_mean},
                        {"avgdiff_mean", row.avgdiff_mean},
                        {"rmsf", row.rmsf}});
      ordered_json sj{{"version", 1}, {"rows", rows}, {"r2_cossim", scatter.r2_cossim}, {"r2_avgdiff", scatter.r2_avgdiff}};
      save_json(rp_dir + "/rmsf_scatter.json", sj);
      out["rmsf_scatter"] = rp_dir + "/rmsf_scatter.json";
      out["r2_cossim"] = scatter.r2_cossim;
    }
    emit(out);
  });

  // ---- fep ------------------------------------------------------------
  auto* fep = app.add_subcommand("fep", "free energy estimates from potential energy differences");
  fep->require_subcommand(1);

  auto* zw = fep->add_subcommand("zwanzig", "exponential-average free energy difference for one leg");
  std::string zw_samples;
  double zw_temp = kDefaultTemperatureK;
  std::uint64_t zw_seed = 0;
  zw->add_option("--samples", zw_samples, "CSV of per-snapshot energy differences, kcal/mol")->required();
  zw->add_option("--temperature", zw_temp, "kelvin");
  zw->add_option("--bootstrap-seed", zw_seed);
  zw->callback([&] {
    EnergySamples samples;
    samples.delta_u = read_samples_csv(zw_samples);
    samples.temperature = zw_temp;
    FreeEnergyResult r = zwanzig(samples, zw_seed);
    emit({{"delta_f", r.delta_f}, {"std_err", r.std_err}, {"temperature", zw_temp}, {"samples", samples.delta_u.size()}});
  });

  auto* crs = fep->add_subcommand("crs", "relative sweetness from two legs or a direct delta-delta-F");
  std::string crs_bound, crs_free;
  double crs_ddf = 0.0, crs_ref = 0.0, crs_temp = kDefaultTemperatureK;
  bool crs_ddf_set = false;
  std::uint64_t crs_seed = 0;
  crs->add_option("--bound", crs_bound, "CSV for the bound leg");
  crs->add_option("--free", crs_free, "CSV for the free leg");
  crs->add_option("--ddf", crs_ddf, "direct delta-delta-F, kcal/mol")->each([&](const std::string&) { crs_ddf_set = true; });
  crs->add_option("--reference-ddf", crs_ref, "reference compound delta-delta-F, kcal/mol")->required();
  crs->add_option("--temperature", crs_temp, "kelvin");
  crs->add_option("--bootstrap-seed", crs_seed);
  crs->callback([&] {
    ordered_json out;
    double ddf;
    if (crs_ddf_set) {
      ddf = crs_ddf;
    } else {
      if (crs_bound.empty() || crs_free.empty())
        fail(Errc::ConfigError, "crs needs either --ddf or both --bound and --free");
      EnergySamples b, f;
      b.delta_u = read_samples_csv(crs_bound);
      f.delta_u = read_samples_csv(crs_free);
      b.temperature = f.temperature = crs_temp;
      FreeEnergyResult rb = zwanzig(b, crs_seed);
      FreeEnergyResult rf = zwanzig(f, derive_seed(crs_seed, 1));
      FreeEnergyResult rel = relative_binding_free_energy(rb, rf);
      ddf = rel.delta_f;
      out["delta_f_bound"] = rb.delta_f;
      out["delta_f_free"] = rf.delta_f;
      out["std_err"] = rel.std_err;
    }
    out["ddf"] = ddf;
    out["crs"] = computed_relative_sweetness(ddf, crs_ref, crs_temp);
    out["log10_crs"] = log10_relative_sweetness(ddf, crs_ref, crs_temp);
    emit(out);
  });

  // ---- run ------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "full analysis from a config file");
  std::string run_config, run_wd;
  int run_jobs = 0;
  std::uint64_t run_seed = 0;
  bool run_seed_set = false;
  run_cmd->add_option("--config", run_config, "pipeline config JSON")->required();
  run_cmd->add_option("--workdir", run_wd, "overrides the config workdir");
  run_cmd->add_option("--jobs", run_jobs, "overrides the config job count");
  run_cmd->add_option("--seed", run_seed, "overrides the training seed")->each([&](const std::string&) { run_seed_set = true; });
  run_cmd->callback([&] {
    PipelineConfig cfg = pipeline_config_from_json(load_json(run_config, Errc::ConfigError));
    std::string wd = default_workdir(run_wd);
    if (!wd.empty()) cfg.workdir = wd;
    if (run_jobs > 0) cfg.jobs = run_jobs;
    if (run_seed_set) cfg.train.seed = run_seed;
    RankingReport report = run_pipeline(cfg);
    ordered_json order = ordered_json::array();
    for (int id : report.rank_order) order.push_back(id);
    emit({{"rank_order", order},
          {"reference_stable", report.reference_stable},
          {"report", cfg.workdir + "/report.json"}});
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const castelo::Error& e) {
    castelo::ordered_json j;
    j["error"] = castelo::errc_name(e.code());
    j["message"] = e.what();
    if (e.where() >= 0) j["where"] = e.where();
    std::cerr << j.dump() << "\n";
    return castelo::exit_code_for(e.code());
  } catch (const std::exception& e) {
    castelo::ordered_json j;
    j["error"] = "internal";
    j["message"] = e.what();
    std::cerr << j.dump() << "\n";
    return castelo::exit_code_for(castelo::Errc::Internal);
  }
}

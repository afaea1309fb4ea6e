#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "trajclust/trajclust.hpp"

namespace fs = std::filesystem;
using namespace trajclust;

namespace {

constexpr int kExitLoop = 2;

ManeuverSet load_dataset(const std::string& path, bool do_rectify) {
  if (path.empty()) throw ConfigError("no data file given");
  ManeuverSet set;
  if (fs::path(path).extension() == ".csv") {
    std::vector<std::string> rejected;
    set = load_csv(path, {}, &rejected);
    for (const auto& r : rejected) std::cerr << "warning: " << r << "\n";
  } else {
    set = load_maneuver_json(path);
  }
  if (do_rectify) {
    auto r = rectify(set);
    for (const auto& e : r.excluded) std::cerr << "warning: sample " << e.id << " excluded: " << e.reason << "\n";
    set = std::move(r.set);
  }
  set.validate();
  if (set.samples.empty()) throw EmptySetError("no usable samples in " + path);
  return set;
}

RunConfig base_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
  for (const auto& o : overrides) apply_override(cfg, o);
  return cfg;
}

void check_ids(const Clustering& c, const ManeuverSet& set) {
  try {
    c.validate(set.ids());
  } catch (const DataError& e) {
    throw DataError(std::string("clustering does not match the data: ") + e.what());
  }
}

std::string history_csv(const ClusterReport& r) {
  std::string out = "iteration,n_k,mu_ll,sigma_ll\n";
  for (std::size_t i = 0; i < r.history.size(); ++i)
    out += std::to_string(i) + ',' + std::to_string(r.history[i].n_k) + ',' + format_double(r.history[i].mu_ll) +
           ',' + format_double(r.history[i].sigma_ll) + '\n';
  return out;
}

int cmd_synth(const std::string& spec_path, std::size_t per, std::uint64_t seed, const std::string& out) {
  const ScenarioSpec spec = spec_path.empty() ? default_scenario(per) : scenario_from_json(read_json_file(spec_path));
  const auto ls = synthesize(spec, seed);
  fs::create_directories(out);
  save_maneuver_json(ls.set, (fs::path(out) / "maneuver.json").string());
  write_csv(ls.set, (fs::path(out) / "maneuver.csv").string());
  write_text_file((fs::path(out) / "labels.csv").string(), labels_csv(ls));
  std::cout << "wrote " << ls.set.samples.size() << " samples to " << out << "\n";
  return 0;
}

int cmd_cluster(const RunConfig& cfg, bool do_rectify) {
  cfg.validate();
  const auto ccfg = cfg.cluster_config();
  if (cfg.out.empty()) throw ConfigError("no output directory given");
  const auto set = load_dataset(cfg.data, do_rectify);
  ComparisonCache cache(set, cfg.ekf, cfg.threads);
  const auto result = sweep(cache, cfg.init, cfg.n_k_min, cfg.n_k_max, ccfg, cfg.seed, cfg.resample);
  const auto& best = result.runs[result.best];

  fs::create_directories(cfg.out);
  write_text_file((fs::path(cfg.out) / "clustering.json").string(),
                  dump_json(to_json(best.clustering, &best.report)));
  write_text_file((fs::path(cfg.out) / "report.csv").string(), history_csv(best.report));
  if (cfg.n_k_max > cfg.n_k_min)
    write_text_file((fs::path(cfg.out) / "sweep.csv").string(), sweep_csv(result.rows));
  write_text_file((fs::path(cfg.out) / "config.txt").string(), print_config(cfg));

  std::cout << "n_k_init " << result.rows[result.best].n_k_init << " -> n_k " << best.report.n_k
            << ", mu_ll " << format_double(best.report.mu_ll) << ", sigma_ll "
            << format_double(best.report.sigma_ll) << ", " << to_string(best.report.termination) << "\n";
  switch (best.report.termination) {
    case Termination::kLoopDetected: return kExitLoop;
    case Termination::kMaxIterations:
      std::cerr << "warning: stopped after max_outer_iters without converging\n";
      return 0;
    case Termination::kConverged: return 0;
  }
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& clustering_path, bool do_rectify,
             const std::string& profiles_path, const std::string& out_path) {
  cfg.validate();
  const auto set = load_dataset(cfg.data, do_rectify);
  const auto clustering = clustering_from_json(read_json_file(clustering_path));
  check_ids(clustering, set);
  ComparisonCache cache(set, cfg.ekf, cfg.threads);
  const auto report = summarize(clustering, cache);

  Json j;
  j["mu_ll"] = report.mu_ll;
  j["sigma_ll"] = report.sigma_ll;
  j["n_k"] = report.n_k;
  j["n_inf"] = report.n_inf;
  if (clustering.size() >= 2) {
    j["davies_bouldin"] = davies_bouldin(velocity_features(set, cfg.resample), clustering);
  } else {
    j["davies_bouldin"] = nullptr;
  }
  if (!cfg.labels.empty()) j["ari"] = adjusted_rand_index(clustering, load_labels_csv(cfg.labels));
  const auto text = dump_json(j);
  std::cout << text;
  if (!out_path.empty()) write_text_file(out_path, text);
  if (!profiles_path.empty()) {
    const auto prof = build_profiles(clustering, set, cfg.n_assertiveness, cfg.n_interaction);
    write_text_file(profiles_path, dump_json(profiles_to_json(clustering, set, prof)));
  }
  return 0;
}

int cmd_export(const RunConfig& cfg, const std::string& clustering_path, bool do_rectify, const std::string& out,
               const std::vector<SampleId>& only, const std::vector<std::string>& traces) {
  cfg.validate();
  const auto set = load_dataset(cfg.data, do_rectify);
  const auto clustering = clustering_from_json(read_json_file(clustering_path));
  check_ids(clustering, set);
  std::vector<const Cluster*> chosen;
  for (SampleId id : only) {
    const Cluster* found = nullptr;
    for (const auto& cl : clustering.clusters)
      if (cl.centroid == id) found = &cl;
    if (!found) throw DataError("no cluster with centroid " + std::to_string(id));
    chosen.push_back(found);
  }
  if (only.empty())
    for (const auto& cl : clustering.clusters) chosen.push_back(&cl);

  fs::create_directories(out);
  for (const Cluster* cl : chosen) {
    const auto stem = "cluster_" + std::to_string(cl->centroid);
    write_text_file((fs::path(out) / (stem + "_profiles.csv")).string(), profile_csv(*cl, set));
    write_text_file((fs::path(out) / (stem + "_centroid.csv")).string(), trajectory_csv(set.by_id(cl->centroid)));
    write_text_file((fs::path(out) / (stem + "_heatmap.csv")).string(),
                    heatmap_csv(heatmap(*cl, set, cfg.heatmap_bin)));
  }
  std::vector<std::pair<SampleId, SampleId>> pairs;
  for (const auto& t : traces) {
    const auto colon = t.find(':');
    if (colon == std::string::npos) throw ConfigError("trace must be SAMPLE:CENTROID, got '" + t + "'");
    pairs.emplace_back(static_cast<SampleId>(parse_double(t.substr(0, colon))),
                       static_cast<SampleId>(parse_double(t.substr(colon + 1))));
  }
  if (cfg.export_traces && traces.empty())
    for (const Cluster* cl : chosen)
      for (SampleId m : cl->members) pairs.emplace_back(m, cl->centroid);
  for (const auto& [s, c] : pairs) {
    if (!set.contains(s) || !set.contains(c))
      throw DataError("trace pair " + std::to_string(s) + ":" + std::to_string(c) + " not in the data");
    std::vector<TraceRow> rows;
    compare(set.by_id(s), set.by_id(c), cfg.ekf, &rows);
    write_text_file((fs::path(out) / ("trace_" + std::to_string(s) + "_" + std::to_string(c) + ".csv")).string(),
                    trace_csv(rows));
  }
  std::cout << "exported " << chosen.size() << " clusters and " << pairs.size() << " traces to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory clustering by EKF membership likelihood"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string data, out, labels, clustering_path, profiles_path, spec_path, init_name;
  double t_kl = 0.0, bin = 0.0;
  std::size_t per = 10, nk_min = 0, nk_max = 0;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool do_rectify = false;
  std::vector<SampleId> only;
  std::vector<std::string> traces;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "key = value config file");
    sub->add_option("--set", overrides, "override one config key (key=value)");
    sub->add_option("-d,--data", data, "maneuver JSON or track CSV");
    sub->add_option("--threads", threads, "worker threads for comparisons");
    sub->add_flag("--rectify", do_rectify, "trim samples to common start/end gates");
  };

  auto* synth = app.add_subcommand("synth", "generate a labeled synthetic maneuver");
  synth->add_option("--spec", spec_path, "scenario JSON (default: built-in three archetypes)");
  synth->add_option("--per", per, "samples per archetype for the built-in scenario");
  synth->add_option("--seed", seed, "random seed")->required();
  synth->add_option("-o,--out", out, "output directory")->required();

  auto* cluster = app.add_subcommand("cluster", "cluster a maneuver");
  common(cluster);
  cluster->add_option("-o,--out", out, "output directory");
  cluster->add_option("--t-kl", t_kl, "split/merge threshold");
  cluster->add_option("--init", init_name, "agglomerative | pam | spectral");
  cluster->add_option("--nk-min", nk_min, "smallest initial cluster count");
  cluster->add_option("--nk-max", nk_max, "largest initial cluster count");
  cluster->add_option("--seed", seed, "random seed");

  auto* eval = app.add_subcommand("eval", "evaluate a clustering");
  common(eval);
  eval->add_option("--clustering", clustering_path, "clustering JSON")->required();
  eval->add_option("-l,--labels", labels, "ground-truth id,label CSV");
  eval->add_option("--profiles", profiles_path, "write behavior profile JSON here");
  eval->add_option("-o,--out", out, "also write the report here");

  auto* plots = app.add_subcommand("export-plots", "write CSV data for plots");
  common(plots);
  plots->add_option("--clustering", clustering_path, "clustering JSON")->required();
  plots->add_option("-o,--out", out, "output directory")->required();
  plots->add_option("--cluster", only, "only clusters with these centroid ids");
  plots->add_option("--trace", traces, "membership trace for SAMPLE:CENTROID");
  plots->add_option("--bin", bin, "heat-map cell size in metres");

  auto* defaults = app.add_subcommand("defaults", "print the default configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(spec_path, per, seed, out);
    if (defaults->parsed()) {
      std::cout << print_config(RunConfig{});
      return 0;
    }
    RunConfig cfg = base_config(config_path, overrides);
    if (!data.empty()) cfg.data = data;
    if (threads > 0) cfg.threads = threads;
    if (cluster->parsed()) {
      if (!out.empty()) cfg.out = out;
      if (cluster->count("--t-kl")) cfg.t_kl = t_kl;
      if (!init_name.empty()) cfg.init = parse_init_method(init_name);
      if (cluster->count("--nk-min")) cfg.n_k_min = nk_min;
      if (cluster->count("--nk-max")) cfg.n_k_max = nk_max;
      if (cluster->count("--seed")) cfg.seed = seed;
      return cmd_cluster(cfg, do_rectify);
    }
    if (eval->parsed()) {
      if (!labels.empty()) cfg.labels = labels;
      return cmd_eval(cfg, clustering_path, do_rectify, profiles_path, out);
    }
    if (plots->parsed()) {
      if (plots->count("--bin")) cfg.heatmap_bin = bin;
      return cmd_export(cfg, clustering_path, do_rectify, out, only, traces);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmmcd/gmmcd.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

struct Options {
  gmmcd::EmConfig em;
  gmmcd::DetectionConfig det;
  gmmcd::FilterParams filters;
  bool use_pca = false;
  int threads = 0;  // 0: hardware default
  std::vector<double> crop;
  std::string output_dir = ".";
  std::string in_a;
  std::string in_b;
  std::string model_t0_path;
  std::string model_t_path;
  std::string dump_flow_path;
  double inflation = 1.0;
  std::vector<int> k_list;
  bool seed_given = false;
};

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gmmcd::Error("cannot open '" + path + "'");
  nlohmann::json j;
  in >> j;
  return j;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw gmmcd::Error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw gmmcd::Error("write to '" + path + "' failed");
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

gmmcd::PointCloud load_input(const std::string& path, const Options& o) {
  gmmcd::PointCloud cloud = gmmcd::load_ply(path);
  if (!o.crop.empty()) {
    gmmcd::Vec lo(3), hi(3);
    for (int d = 0; d < 3; ++d) {
      lo[d] = o.crop[static_cast<std::size_t>(d)];
      hi[d] = o.crop[static_cast<std::size_t>(d) + 3];
    }
    cloud = gmmcd::crop_aabb(cloud, lo, hi);
  }
  return cloud;
}

/// Stage summary in the four reporting categories; preprocessing counts as
/// part of data loading.
void print_stage_timings(const gmmcd::StageTimings& t) {
  std::printf("Data Loading:           %10.1f ms\n", t.data_loading_ms + t.filtering_ms);
  std::printf("PCA:                    %10.1f ms\n", t.pca_ms);
  std::printf("GMM Clustering (EM):    %10.1f ms\n", t.em_ms);
  std::printf("Change Detection (EMD): %10.1f ms\n", t.emd_ms);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

int run_detect(const Options& o) {
  std::filesystem::create_directories(o.output_dir);
  const auto t_load = Clock::now();
  const gmmcd::PointCloud cloud_t0 = load_input(o.in_a, o);
  const gmmcd::PointCloud cloud_t = load_input(o.in_b, o);
  std::optional<gmmcd::MixtureModel> pre_t0, pre_t;
  if (!o.model_t0_path.empty())
    pre_t0 = load_json(o.model_t0_path).get<gmmcd::MixtureModel>();
  if (!o.model_t_path.empty())
    pre_t = load_json(o.model_t_path).get<gmmcd::MixtureModel>();
  const double load_ms = ms_since(t_load);

  gmmcd::DetectionReport report =
      gmmcd::run_pipeline(cloud_t0, cloud_t, o.em, o.det, o.filters, o.use_pca,
                          pre_t0 ? &*pre_t0 : nullptr, pre_t ? &*pre_t : nullptr);
  report.timings.data_loading_ms = load_ms;
  report.timings.total_ms += load_ms;

  write_json(join_path(o.output_dir, "report.json"), report);
  gmmcd::save_ply(report.mined_cloud, &report.labels,
                  join_path(o.output_dir, "labeled.ply"));

  print_stage_timings(report.timings);
  std::printf("K*(t0) = %d, K*(t) = %d\n", report.k_star_t0, report.k_star_t);
  std::printf("initial EMD = %.9g\n", report.initial_emd);
  std::printf("extracted components: %zu\n", report.extracted.size());
  print_warnings(report.warnings);
  return report.change_detected() ? 0 : 1;
}

int run_cluster(const Options& o) {
  std::filesystem::create_directories(o.output_dir);
  const auto t_load = Clock::now();
  gmmcd::PointCloud cloud = load_input(o.in_a, o);
  const double load_ms = ms_since(t_load);

  auto t_stage = Clock::now();
  bool undersized = false;
  cloud = gmmcd::statistical_outlier_removal(cloud, o.filters.sor_neighbors,
                                             o.filters.sor_stddev_mult, &undersized);
  cloud = gmmcd::voxel_downsample(cloud, o.filters.voxel_size);
  const double filter_ms = ms_since(t_stage);

  double pca_ms = 0.0;
  if (o.use_pca) {
    t_stage = Clock::now();
    const gmmcd::PcaTransform transform = gmmcd::pca_fit(cloud, 2);
    cloud = gmmcd::pca_apply(transform, cloud);
    pca_ms = ms_since(t_stage);
  }

  t_stage = Clock::now();
  const auto [model, trace] = gmmcd::fit(cloud, o.em);
  const double em_ms = ms_since(t_stage);

  write_json(join_path(o.output_dir, "model.json"), model);
  gmmcd::StageTimings timings;
  timings.data_loading_ms = load_ms;
  timings.filtering_ms = filter_ms;
  timings.pca_ms = pca_ms;
  timings.em_ms = em_ms;
  print_stage_timings(timings);
  std::printf("K* = %d (%zu points after filtering)\n", trace.k_star, cloud.size());
  print_warnings(trace.warnings);
  return 0;
}

int run_emd(const Options& o) {
  const auto a = load_json(o.in_a).get<gmmcd::MixtureModel>();
  const auto b = load_json(o.in_b).get<gmmcd::MixtureModel>();
  const gmmcd::Signature sig_a = gmmcd::signature_of(a);
  const gmmcd::Signature sig_b = gmmcd::signature_of(b);
  const gmmcd::GroundDistanceMatrix dist = gmmcd::ground_distances(sig_a, sig_b);
  const gmmcd::FlowMatrix flow = gmmcd::solve_transport(sig_a, sig_b, dist);
  std::printf("EMD: %.12g\n", gmmcd::transport_work(flow, dist) / flow.total_flow);
  if (!o.dump_flow_path.empty()) write_json(o.dump_flow_path, flow);
  return 0;
}

int run_eval(const Options& o) {
  std::filesystem::create_directories(o.output_dir);
  const auto report = load_json(o.in_a).get<gmmcd::DetectionReport>();
  const nlohmann::json truth_json = load_json(o.in_b);
  const auto all_regions =
      (truth_json.is_array() ? truth_json : truth_json.at("regions"))
          .get<std::vector<gmmcd::GroundTruthRegion>>();

  const gmmcd::RegionKind wanted = report.mode == gmmcd::DetectionMode::appear
                                       ? gmmcd::RegionKind::appeared
                                       : gmmcd::RegionKind::disappeared;
  std::vector<gmmcd::GroundTruthRegion> regions;
  for (const auto& r : all_regions) {
    if (r.kind == wanted) regions.push_back(r);
  }

  const gmmcd::ConfusionCounts counts = gmmcd::classify_components(
      report.mined_model, report.source_indices, regions, o.inflation);
  const gmmcd::Metrics metrics = gmmcd::compute_metrics(counts);

  nlohmann::json out{{"mode", report.mode},
                     {"regions", regions.size()},
                     {"inflation_scale", o.inflation},
                     {"counts", counts},
                     {"metrics", metrics}};
  write_json(join_path(o.output_dir, "metrics.json"), out);

  const auto cell = [](const std::optional<double>& v) {
    char buf[16];
    if (v) std::snprintf(buf, sizeof(buf), "%9.3f", *v);
    else std::snprintf(buf, sizeof(buf), "%9s", "n/a");
    return std::string(buf);
  };
  std::printf("Regions Components  TP  FP  FN  TN  Accuracy Precision    Recall        F1\n");
  std::printf("%7zu %10d %3d %3d %3d %3d %s %s %s %s\n", regions.size(),
              counts.total(), counts.tp, counts.fp, counts.fn, counts.tn,
              cell(metrics.accuracy).c_str(), cell(metrics.precision).c_str(),
              cell(metrics.recall).c_str(), cell(metrics.f1).c_str());
  return 0;
}

int run_synth(const Options& o) {
  std::filesystem::create_directories(o.output_dir);
  auto spec = load_json(o.in_a).get<gmmcd::SceneSpec>();
  if (o.seed_given) spec.seed = o.em.seed;
  const gmmcd::ScenePair pair = gmmcd::generate_pair(spec);
  gmmcd::save_ply(pair.t0, join_path(o.output_dir, "t0.ply"));
  gmmcd::save_ply(pair.t, join_path(o.output_dir, "t.ply"));
  write_json(join_path(o.output_dir, "truth.json"),
             nlohmann::json{{"regions", pair.truth}});
  std::printf("t0: %zu points, t: %zu points, truth regions: %zu\n", pair.t0.size(),
              pair.t.size(), pair.truth.size());
  return 0;
}

int run_sweep(const Options& o) {
  std::filesystem::create_directories(o.output_dir);
  const auto t_load = Clock::now();
  const gmmcd::PointCloud cloud_t0 = load_input(o.in_a, o);
  const gmmcd::PointCloud cloud_t = load_input(o.in_b, o);
  const double load_ms = ms_since(t_load);

  std::ostringstream csv;
  csv << "K,k_star_t0,k_star_t,data_loading_ms,filtering_ms,pca_ms,em_ms,emd_ms,"
         "total_ms,pi_size\n";
  for (const int k : o.k_list) {
    gmmcd::EmConfig em = o.em;
    em.k_init = k;
    if (em.k_min > k) em.k_min = k;
    gmmcd::DetectionReport report =
        gmmcd::run_pipeline(cloud_t0, cloud_t, em, o.det, o.filters, o.use_pca);
    report.timings.data_loading_ms = load_ms;
    report.timings.total_ms += load_ms;
    char row[256];
    std::snprintf(row, sizeof(row), "%d,%d,%d,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%zu\n", k,
                  report.k_star_t0, report.k_star_t, report.timings.data_loading_ms,
                  report.timings.filtering_ms, report.timings.pca_ms,
                  report.timings.em_ms, report.timings.emd_ms, report.timings.total_ms,
                  report.extracted.size());
    csv << row;
    print_warnings(report.warnings);
  }
  write_text(join_path(o.output_dir, "sweep.csv"), csv.str());
  std::fputs(csv.str().c_str(), stdout);
  return 0;
}

/// Flags shared by the commands that run the fitting pipeline. Any of them
/// may also come from --config (same names, no leading dashes); explicit
/// flags win over the file, the file wins over built-in defaults.
void add_pipeline_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--k-init", o.em.k_init, "Initial component count");
  cmd->add_option("--k-min", o.em.k_min, "Smallest component count considered");
  cmd->add_option("--tol", o.em.tol, "Absolute log-likelihood convergence threshold");
  cmd->add_option("--max-iters", o.em.max_iters, "Iteration cap per annihilation rung");
  cmd->add_option("--covariance-floor", o.em.covariance_floor,
                  "Covariance ridge, relative to the data scale");
  cmd->add_flag("--force-annihilation,!--no-force-annihilation", o.em.force_annihilation,
                "Keep deleting components after convergence to scan all model sizes");
  cmd->add_option("--voxel-size", o.filters.voxel_size, "Voxel edge length in meters");
  cmd->add_option("--sor-neighbors", o.filters.sor_neighbors,
                  "Neighbor count for outlier removal");
  cmd->add_option("--sor-stddev", o.filters.sor_stddev_mult,
                  "Outlier threshold in standard deviations");
  cmd->add_flag("--pca", o.use_pca, "Project to the two principal directions before fitting");
  cmd->add_option("--crop", o.crop,
                  "Keep only points inside the box minx,miny,minz,maxx,maxy,maxz")
      ->delimiter(',')
      ->expected(6);
}

void add_detection_flags(CLI::App* cmd, Options& o) {
  const std::map<std::string, gmmcd::DetectionMode> modes{
      {"appear", gmmcd::DetectionMode::appear},
      {"disappear", gmmcd::DetectionMode::disappear}};
  cmd->add_option("--mode", o.det.mode, "Change direction to mine")
      ->transform(CLI::CheckedTransformer(modes, CLI::ignore_case));
  cmd->add_option("--min-extractions", o.det.min_extractions,
                  "Extract at least this many components");
  cmd->add_option("--max-extractions", o.det.max_extractions,
                  "Extraction cap (-1: component count)");
  cmd->add_flag("--renormalize,!--no-renormalize", o.det.renormalize,
                "Rescale remaining weights to unit mass when scoring a removal");
}

void add_common_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--seed", o.em.seed, "RNG seed")
      ->check(CLI::NonNegativeNumber)
      ->each([&o](const std::string&) { o.seed_given = true; });
  cmd->add_option("--threads", o.threads, "Worker thread cap (0: hardware parallelism)");
  cmd->add_option("--output-dir", o.output_dir, "Directory for output files");
  cmd->set_config("--config", "", "Key-value file with these flags' names, no dashes");
}

/// CLI11 reads config files only on the root command, but every gmmcd flag
/// lives on a subcommand, so the file is expanded by hand: each `key=value`
/// entry is spliced in as `--key value` right after the subcommand name.
/// Entries whose option already appears on the command line are dropped, so
/// explicit flags win over the file.
std::vector<std::string> expand_config_args(const CLI::App& app,
                                            std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(std::string("--config=").size());
    }
  }
  if (path.empty()) return args;
  const CLI::App* sub = args.front().empty() || args.front().front() == '-'
                            ? nullptr
                            : app.get_subcommand_no_throw(args.front());
  if (sub == nullptr) return args;  // the normal parse reports the problem

  std::vector<std::string> spliced;
  for (const CLI::ConfigItem& item : app.get_config_formatter()->from_file(path)) {
    if (!item.parents.empty())
      throw gmmcd::Error("config: sections are not supported ('" + item.fullname() + "')");
    if (item.name == "config")
      throw gmmcd::Error("config: a config file cannot include another one");
    const std::string flag = "--" + item.name;
    const CLI::Option* op = sub->get_option_no_throw(flag);
    if (op == nullptr)
      throw gmmcd::Error("config: unknown option '" + item.name + "' for '" +
                         sub->get_name() + "'");
    bool given = false;
    for (const std::string& arg : args) {
      if (arg == flag || arg.rfind(flag + "=", 0) == 0) {
        given = true;
        break;
      }
    }
    if (given) continue;
    if (op->get_expected_min() == 0) {  // flags only accept an attached value
      if (item.inputs.size() > 1)
        throw gmmcd::Error("config: flag '" + item.name + "' takes at most one value");
      spliced.push_back(flag + "=" + (item.inputs.empty() ? "true" : item.inputs.front()));
    } else {
      spliced.push_back(flag);
      spliced.insert(spliced.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  args.insert(args.begin() + 1, spliced.begin(), spliced.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene change detection for 3-D point clouds: Gaussian mixture fitting "
               "plus greedy earth mover's distance reduction"};
  app.require_subcommand(1);
  Options o;

  CLI::App* detect = app.add_subcommand(
      "detect", "Detect changes between two scans; writes report.json and labeled.ply");
  detect->add_option("t0", o.in_a, "Reference scan (PLY)")->required();
  detect->add_option("t", o.in_b, "Later scan (PLY)")->required();
  detect->add_option("--model-t0", o.model_t0_path, "Pre-fit mixture for t0 (skips EM)");
  detect->add_option("--model-t", o.model_t_path, "Pre-fit mixture for t (skips EM)");
  add_pipeline_flags(detect, o);
  add_detection_flags(detect, o);
  add_common_flags(detect, o);

  CLI::App* cluster =
      app.add_subcommand("cluster", "Fit one mixture to a scan; writes model.json");
  cluster->add_option("input", o.in_a, "Scan (PLY)")->required();
  add_pipeline_flags(cluster, o);
  add_common_flags(cluster, o);

  CLI::App* emd_cmd = app.add_subcommand(
      "emd", "Earth mover's distance between two serialized mixtures");
  emd_cmd->add_option("model_a", o.in_a, "First mixture (JSON)")->required();
  emd_cmd->add_option("model_b", o.in_b, "Second mixture (JSON)")->required();
  emd_cmd->add_option("--dump-flow", o.dump_flow_path, "Write the optimal flows as JSON");
  add_common_flags(emd_cmd, o);

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Score a detection report against ground truth; writes metrics.json");
  eval_cmd->add_option("report", o.in_a, "report.json from detect")->required();
  eval_cmd->add_option("truth", o.in_b, "Ground-truth regions (JSON)")->required();
  eval_cmd->add_option("--inflation", o.inflation,
                       "Region margin in component standard deviations");
  add_common_flags(eval_cmd, o);

  CLI::App* synth = app.add_subcommand(
      "synth", "Generate a synthetic scan pair; writes t0.ply, t.ply, truth.json");
  synth->add_option("spec", o.in_a, "Scene description (JSON)")->required();
  add_common_flags(synth, o);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Run detect across several initial component counts; writes sweep.csv");
  sweep->add_option("t0", o.in_a, "Reference scan (PLY)")->required();
  sweep->add_option("t", o.in_b, "Later scan (PLY)")->required();
  sweep->add_option("--k-list", o.k_list, "Initial component counts to try")
      ->delimiter(',')
      ->required();
  add_pipeline_flags(sweep, o);
  add_detection_flags(sweep, o);
  add_common_flags(sweep, o);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_args(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    gmmcd::set_worker_threads(o.threads);
    if (app.got_subcommand(detect)) return run_detect(o);
    if (app.got_subcommand(cluster)) return run_cluster(o);
    if (app.got_subcommand(emd_cmd)) return run_emd(o);
    if (app.got_subcommand(eval_cmd)) return run_eval(o);
    if (app.got_subcommand(synth)) return run_synth(o);
    if (app.got_subcommand(sweep)) return run_sweep(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

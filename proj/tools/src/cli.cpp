#include "hypergeo/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypergeo/ball.hpp"
#include "hypergeo/dataset.hpp"
#include "hypergeo/errors.hpp"
#include "hypergeo/ghdm.hpp"
#include "hypergeo/hyperbolicity.hpp"
#include "hypergeo/io.hpp"
#include "hypergeo/mining.hpp"
#include "hypergeo/rng.hpp"
#include "hypergeo/trainer.hpp"
#include "hypergeo/version.hpp"

namespace hypergeo::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("HYPERGEO_SEED");
  if (raw == nullptr) return std::nullopt;
  std::uint64_t value = 0;
  const std::string text(raw);
  const auto [ptr, ec] =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ValidationError("HYPERGEO_SEED: not an unsigned integer: " + text);
  }
  return value;
}

void apply_env_seed(std::uint64_t& seed) {
  if (const auto forced = env_seed()) seed = *forced;
}

std::string fmt(double v) { return io::format_double(v); }

struct GenDataArgs {
  trainer::DatasetConfig config;
  std::string out;
};

void run_gen_data(GenDataArgs& a, std::ostream& out) {
  apply_env_seed(a.config.seed);
  const auto t0 = Clock::now();
  const auto ds = trainer::generate_tree_dataset(a.config);
  const double gen_s = seconds_since(t0);

  const auto t1 = Clock::now();
  io::save_dataset(a.out, ds);
  const double write_s = seconds_since(t1);

  io::RunManifest manifest;
  manifest.command = "gen-data";
  manifest.config_json = io::dataset_config_json(ds.config);
  manifest.seed = ds.config.seed;
  manifest.phase_seconds = {{"generate", gen_s}, {"write", write_s}};
  io::write_manifest(io::manifest_path_for(a.out), manifest);

  const int m = static_cast<int>(ds.points.size());
  out << "points=" << m << " classes=" << ds.num_classes();
  if (m >= 4) {
    std::vector<Eigen::VectorXd> coords;
    coords.reserve(ds.points.size());
    for (const auto& p : ds.points) coords.push_back(p.coords());
    const auto report = hyperbolicity::delta_rel_sampled(
        coords, hyperbolicity::PoincareMetric{ds.kappa()}, std::min(10, m), 8,
        ds.config.seed);
    out << " delta_rel=" << fmt(report.delta_rel);
  }
  out << "\n";
}

struct DeltaArgs {
  std::string in;
  std::string metric = "poincare";
  double kappa = 0.0;
  bool kappa_given = false;
  int samples = 10;
  int trials = 100;
  std::uint64_t seed = 1;
  int threads = 1;
};

void run_delta(DeltaArgs& a, std::ostream& out) {
  apply_env_seed(a.seed);
  const auto ds = io::load_dataset(a.in);
  std::vector<Eigen::VectorXd> coords;
  coords.reserve(ds.points.size());
  for (const auto& p : ds.points) coords.push_back(p.coords());

  hyperbolicity::HyperbolicityReport report;
  if (a.metric == "euclidean") {
    report = hyperbolicity::delta_rel_sampled(coords,
                                              hyperbolicity::EuclideanMetric{},
                                              a.samples, a.trials, a.seed,
                                              a.threads);
  } else {
    const ball::CurvatureMag kappa =
        a.kappa_given ? ball::CurvatureMag(a.kappa) : ds.kappa();
    report = hyperbolicity::delta_rel_sampled(
        coords, hyperbolicity::PoincareMetric{kappa}, a.samples, a.trials,
        a.seed, a.threads);
  }
  out << "delta,diam,delta_rel,sample_size,trials,seed\n"
      << fmt(report.delta) << ',' << fmt(report.diam) << ','
      << fmt(report.delta_rel) << ',' << report.num_samples << ','
      << report.num_trials << ',' << a.seed << "\n";
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out_checkpoint;
  std::string out_metrics;
};

void run_train(TrainArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto ds = io::load_dataset(a.data);
  trainer::TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config, std::ios::binary);
    if (!in) throw ValidationError("train config: cannot read " + a.config);
    std::ostringstream buf;
    buf << in.rdbuf();
    cfg = io::parse_train_config(buf.str(), cfg);
  }
  apply_env_seed(cfg.seed);
  const double load_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const auto result = trainer::train(ds, cfg);
  const double train_s = seconds_since(t1);

  const auto t2 = Clock::now();
  io::save_checkpoint(a.out_checkpoint, result.params, cfg);
  std::vector<std::vector<std::string>> rows;
  rows.reserve(result.loss_trace.size());
  for (std::size_t i = 0; i < result.loss_trace.size(); ++i) {
    rows.push_back({std::to_string(i), fmt(result.loss_trace[i]),
                    std::to_string(result.hard_counts[i])});
  }
  io::write_csv(a.out_metrics, {"step", "loss", "hard_count"}, rows);
  const double write_s = seconds_since(t2);

  io::RunManifest manifest;
  manifest.command = "train";
  manifest.config_json =
      io::train_config_json(cfg, ds.config.dim, result.params.config().base_kappa);
  manifest.seed = cfg.seed;
  manifest.phase_seconds = {{"load", load_s}, {"train", train_s},
                            {"write", write_s}};
  io::write_manifest(io::manifest_path_for(a.out_checkpoint), manifest);
  io::write_manifest(io::manifest_path_for(a.out_metrics), manifest);

  out << "steps=" << result.loss_trace.size()
      << " final_smoothed_loss=" << fmt(result.final_smoothed_loss) << "\n";
}

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  int episodes = 200;
  int threads = 1;
  std::string out_metrics;
};

void run_eval(EvalArgs& a, std::ostream& out) {
  const auto t0 = Clock::now();
  const auto ds = io::load_dataset(a.data);
  auto ckpt = io::load_checkpoint(a.checkpoint);
  apply_env_seed(ckpt.train.seed);
  if (ckpt.params.config().dim != ds.config.dim) {
    throw ValidationError("eval: checkpoint dimension " +
                          std::to_string(ckpt.params.config().dim) +
                          " does not match dataset dimension " +
                          std::to_string(ds.config.dim));
  }
  const double load_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const auto result =
      trainer::evaluate(ckpt.params, ds, ckpt.train, a.episodes, a.threads);
  const double eval_s = seconds_since(t1);

  io::write_csv(a.out_metrics,
                {"episodes", "adapted_accuracy", "adapted_ci", "fixed_accuracy",
                 "fixed_ci", "hard_fraction", "fixed_easy_accuracy",
                 "fixed_hard_accuracy"},
                {{std::to_string(result.episodes), fmt(result.adapted_accuracy),
                  fmt(result.adapted_ci), fmt(result.fixed_accuracy),
                  fmt(result.fixed_ci), fmt(result.hard_fraction),
                  fmt(result.fixed_easy_accuracy),
                  fmt(result.fixed_hard_accuracy)}});

  nlohmann::json cfg = nlohmann::json::parse(io::train_config_json(
      ckpt.train, ds.config.dim, ckpt.params.config().base_kappa));
  cfg["episodes"] = a.episodes;
  cfg["threads"] = a.threads;
  io::RunManifest manifest;
  manifest.command = "eval";
  manifest.config_json = cfg.dump();
  manifest.seed = ckpt.train.seed;
  manifest.phase_seconds = {{"load", load_s}, {"evaluate", eval_s}};
  io::write_manifest(io::manifest_path_for(a.out_metrics), manifest);

  out << "episodes=" << result.episodes
      << " adapted=" << fmt(result.adapted_accuracy)
      << " fixed=" << fmt(result.fixed_accuracy)
      << " hard_fraction=" << fmt(result.hard_fraction) << "\n";
}

struct MineArgs {
  std::string data;
  std::string checkpoint;
  double threshold = -1.0;
  bool threshold_given = false;
  std::string out;
};

void run_mine(MineArgs& a, std::ostream& out) {
  const auto ds = io::load_dataset(a.data);
  auto ckpt = io::load_checkpoint(a.checkpoint);
  apply_env_seed(ckpt.train.seed);
  const double threshold =
      a.threshold_given ? a.threshold : ckpt.train.threshold;

  std::vector<int> train_pool;
  std::vector<int> eval_pool;
  trainer::split_classes(ds.num_classes(), train_pool, eval_pool);
  const auto episode =
      trainer::sample_episode(ds, eval_pool, ckpt.train.ways, ckpt.train.shots,
                              ckpt.train.queries, ckpt.train.seed);
  const auto protos =
      mining::build_prototypes(episode.support, episode.support_labels);
  const auto records = mining::mine_records(episode.query, protos, threshold);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(records.size());
  int selected = 0;
  for (const auto& r : records) {
    selected += r.selected ? 1 : 0;
    rows.push_back({std::to_string(r.query_index), fmt(r.d1), fmt(r.d2),
                    fmt(r.ratio), r.selected ? "1" : "0"});
  }
  io::write_csv(a.out, {"query_index", "d1", "d2", "ratio", "selected"}, rows);

  nlohmann::json cfg =
      nlohmann::json::parse(io::train_config_json(ckpt.train));
  cfg["threshold"] = threshold;
  io::RunManifest manifest;
  manifest.command = "mine";
  manifest.config_json = cfg.dump();
  manifest.seed = ckpt.train.seed;
  io::write_manifest(io::manifest_path_for(a.out), manifest);

  out << "selected=" << selected << " of " << records.size()
      << " threshold=" << fmt(threshold) << "\n";
}

struct GradcheckArgs {
  int dim = 16;
  int rank = 4;
  std::uint64_t seed = 1;
  int probes = 5;
  double tol = 1e-4;
  std::string out;
};

void run_gradcheck(GradcheckArgs& a, std::ostream& out) {
  apply_env_seed(a.seed);
  ghdm::GhdmConfig config;
  config.dim = a.dim;
  config.rank = a.rank;
  const auto report =
      ghdm::gradcheck_adapted_distance(config, a.seed, a.probes);

  const std::vector<std::string> header = {"dim", "rank", "seed", "probes",
                                           "max_rel_err"};
  const std::vector<std::string> row = {
      std::to_string(a.dim), std::to_string(a.rank), std::to_string(a.seed),
      std::to_string(report.probes), fmt(report.max_rel_err)};
  out << "dim,rank,seed,probes,max_rel_err\n"
      << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << ','
      << row[4] << "\n";
  if (!a.out.empty()) {
    io::write_csv(a.out, header, {row});
    nlohmann::json cfg;
    cfg["dim"] = a.dim;
    cfg["rank"] = a.rank;
    cfg["seed"] = a.seed;
    cfg["probes"] = a.probes;
    cfg["tol"] = a.tol;
    io::RunManifest manifest;
    manifest.command = "gradcheck";
    manifest.config_json = cfg.dump();
    manifest.seed = a.seed;
    io::write_manifest(io::manifest_path_for(a.out), manifest);
  }
  if (report.max_rel_err > a.tol) {
    throw NumericalFault("gradcheck",
                         "max relative error " + fmt(report.max_rel_err) +
                             " exceeds tolerance " + fmt(a.tol));
  }
}

struct BenchLowrankArgs {
  std::vector<int> dims = {32, 64};
  std::vector<int> ranks = {2, 4, 8, 16};
  int trials = 20;
  int pairs = 16;
  std::uint64_t seed = 1;
  std::string out;
};

ball::BallPoint random_ball_point(Rng& rng, int dim,
                                  const ball::CurvatureMag& kappa) {
  Eigen::VectorXd v(dim);
  for (int d = 0; d < dim; ++d) v[d] = rng.normal();
  const double radius = 0.8 * rng.uniform() / kappa.sqrt_value();
  v *= radius / (v.norm() + 1e-15);
  return ball::BallPoint(v, kappa);
}

void run_bench_lowrank(BenchLowrankArgs& a, std::ostream& out) {
  apply_env_seed(a.seed);
  if (a.dims.empty() || a.ranks.empty()) {
    throw ValidationError("bench-lowrank: --dims and --ranks must be non-empty");
  }
  if (a.trials < 1 || a.pairs < 1) {
    throw ValidationError("bench-lowrank: --trials and --pairs must be positive");
  }

  std::vector<std::vector<std::string>> rows;
  for (int n : a.dims) {
    std::vector<int> ks;
    for (int k : a.ranks) {
      if (k <= n) ks.push_back(k);
    }
    if (ks.empty()) continue;
    const auto errs = ghdm::lowrank_error_experiment(n, ks, a.trials, a.seed);

    for (std::size_t i = 0; i < ks.size(); ++i) {
      const int k = ks[i];
      ghdm::GhdmConfig config;
      config.dim = n;
      config.rank = k;
      const auto params = ghdm::GeneratorParams::random_init(config, a.seed);
      Rng rng(a.seed + static_cast<std::uint64_t>(k));
      const ball::CurvatureMag kappa(config.base_kappa);
      std::vector<std::pair<ball::BallPoint, ball::BallPoint>> sample;
      sample.reserve(static_cast<std::size_t>(a.pairs));
      for (int p = 0; p < a.pairs; ++p) {
        sample.emplace_back(random_ball_point(rng, n, kappa),
                            random_ball_point(rng, n, kappa));
      }
      double checksum =
          ghdm::adapted_distance(params, sample[0].first, sample[0].second);
      const auto t0 = Clock::now();
      for (const auto& [xi, xj] : sample) {
        checksum += ghdm::adapted_distance(params, xi, xj);
      }
      const double per_pair_ms = seconds_since(t0) * 1e3 / a.pairs;
      if (!std::isfinite(checksum)) {
        throw NumericalFault("bench-lowrank", "non-finite distance produced");
      }

      const auto& e = errs[i];
      rows.push_back({std::to_string(e.dim), std::to_string(e.rank),
                      fmt(e.median_err), fmt(e.q25), fmt(e.q75),
                      fmt(per_pair_ms)});
    }
  }
  io::write_csv(a.out,
                {"dim", "rank", "median_err", "q25", "q75", "pair_time_ms"},
                rows);

  nlohmann::json cfg;
  cfg["dims"] = a.dims;
  cfg["ranks"] = a.ranks;
  cfg["trials"] = a.trials;
  cfg["pairs"] = a.pairs;
  io::RunManifest manifest;
  manifest.command = "bench-lowrank";
  manifest.config_json = cfg.dump();
  manifest.seed = a.seed;
  io::write_manifest(io::manifest_path_for(a.out), manifest);

  out << "rows=" << rows.size() << " out=" << a.out << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"hyperbolic metric learning toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand(
      "gen-data", "Generate a synthetic hierarchical dataset");
  gen_cmd->add_option("--depth", gen.config.depth, "Tree depth")
      ->capture_default_str();
  gen_cmd->add_option("--branching", gen.config.branching, "Children per node")
      ->capture_default_str();
  gen_cmd
      ->add_option("--classes", gen.config.classes,
                   "Leaf classes to keep (0 = all)")
      ->capture_default_str();
  gen_cmd->add_option("--dim", gen.config.dim, "Embedding dimension")
      ->capture_default_str();
  gen_cmd
      ->add_option("--per-class", gen.config.per_class, "Points per class")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.config.noise_scale, "Noise scale")
      ->capture_default_str();
  gen_cmd->add_option("--kappa", gen.config.kappa, "Curvature magnitude")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.config.seed, "Random seed")
      ->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset path")->required();
  gen_cmd->callback([&] { run_gen_data(gen, out); });

  DeltaArgs delta;
  auto* delta_cmd = app.add_subcommand(
      "delta", "Estimate relative delta-hyperbolicity of a dataset");
  delta_cmd->add_option("--in", delta.in, "Dataset path")->required();
  delta_cmd
      ->add_option("--metric", delta.metric, "Distance to use")
      ->check(CLI::IsMember({"euclidean", "poincare"}))
      ->capture_default_str();
  auto* kappa_opt = delta_cmd->add_option(
      "--kappa", delta.kappa, "Curvature override (default: dataset's)");
  delta_cmd->add_option("--samples", delta.samples, "Points per subsample")
      ->capture_default_str();
  delta_cmd->add_option("--trials", delta.trials, "Subsample count")
      ->capture_default_str();
  delta_cmd->add_option("--seed", delta.seed, "Random seed")
      ->capture_default_str();
  delta_cmd->add_option("--threads", delta.threads, "Worker threads")
      ->capture_default_str();
  delta_cmd->callback([&] {
    delta.kappa_given = kappa_opt->count() > 0;
    run_delta(delta, out);
  });

  TrainArgs train;
  auto* train_cmd =
      app.add_subcommand("train", "Train the metric generators episodically");
  train_cmd->add_option("--data", train.data, "Dataset path")->required();
  train_cmd->add_option("--config", train.config,
                        "JSON training config (partial overrides)");
  train_cmd
      ->add_option("--out-checkpoint", train.out_checkpoint,
                   "Checkpoint output path")
      ->required();
  train_cmd
      ->add_option("--out-metrics", train.out_metrics,
                   "Per-step metrics CSV path")
      ->required();
  train_cmd->callback([&] { run_train(train, out); });

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a checkpoint on held-out episodes");
  eval_cmd->add_option("--data", eval.data, "Dataset path")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint path")
      ->required();
  eval_cmd->add_option("--episodes", eval.episodes, "Evaluation episodes")
      ->capture_default_str();
  eval_cmd->add_option("--threads", eval.threads, "Worker threads")
      ->capture_default_str();
  eval_cmd
      ->add_option("--out-metrics", eval.out_metrics, "Metrics CSV path")
      ->required();
  eval_cmd->callback([&] { run_eval(eval, out); });

  MineArgs mine;
  auto* mine_cmd = app.add_subcommand(
      "mine", "Trace hard-pair mining on one held-out episode");
  mine_cmd->add_option("--data", mine.data, "Dataset path")->required();
  mine_cmd->add_option("--checkpoint", mine.checkpoint, "Checkpoint path")
      ->required();
  auto* thr_opt = mine_cmd->add_option(
      "--threshold", mine.threshold,
      "Mining threshold override (default: checkpoint's)");
  mine_cmd->add_option("--out", mine.out, "Mining trace CSV path")->required();
  mine_cmd->callback([&] {
    mine.threshold_given = thr_opt->count() > 0;
    run_mine(mine, out);
  });

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "Check adapted-distance gradients against finite differences");
  grad_cmd->add_option("--dim", grad.dim, "Embedding dimension")
      ->capture_default_str();
  grad_cmd->add_option("--rank", grad.rank, "Projection rank")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad.seed, "Random seed")
      ->capture_default_str();
  grad_cmd->add_option("--probes", grad.probes, "Probes per parameter")
      ->capture_default_str();
  grad_cmd->add_option("--tol", grad.tol, "Maximum accepted relative error")
      ->capture_default_str();
  grad_cmd->add_option("--out", grad.out, "Optional report CSV path");
  grad_cmd->callback([&] { run_gradcheck(grad, out); });

  BenchLowrankArgs bench;
  auto* bench_cmd = app.add_subcommand(
      "bench-lowrank",
      "Sweep truncation error and per-pair cost across dims and ranks");
  bench_cmd->add_option("--dims", bench.dims, "Dimensions to sweep")
      ->capture_default_str();
  bench_cmd->add_option("--ranks", bench.ranks, "Ranks to sweep")
      ->capture_default_str();
  bench_cmd->add_option("--trials", bench.trials, "Residuals per dim")
      ->capture_default_str();
  bench_cmd->add_option("--pairs", bench.pairs, "Timing sample pairs")
      ->capture_default_str();
  bench_cmd->add_option("--seed", bench.seed, "Random seed")
      ->capture_default_str();
  bench_cmd->add_option("--out", bench.out, "Report CSV path")->required();
  bench_cmd->callback([&] { run_bench_lowrank(bench, out); });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  } catch (const NumericalFault& e) {
    err << "numerical fault: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace hypergeo::cli

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpdfp/fpdfp.hpp"

namespace {

using namespace fpdfp;

void apply_overrides(ExperimentConfig& cfg, const CLI::App* sub, std::uint64_t seed,
                     const std::string& out) {
  if (sub->count("--seed") > 0) cfg.seed = seed;
  if (sub->count("--out") > 0) cfg.out = out;
}

int cmd_run(const ExperimentConfig& cfg, std::size_t threads) {
  const ExperimentResult res = run_experiment(cfg, threads);
  const MetricsRow& last = res.rows.back();
  std::printf("rounds=%zu final_train_loss=%s test_accuracy=%s uplink_bits=%llu\n",
              res.rows.size(), format_double(last.train_loss).c_str(),
              format_double(last.test_accuracy).c_str(),
              static_cast<unsigned long long>(last.uplink_bits_cum));
  return 0;
}

int cmd_diagnose(const ExperimentConfig& cfg, std::size_t ref_rounds, std::size_t threads) {
  const ExperimentResult res = diagnose(cfg, ref_rounds, threads);
  const MetricsRow& last = res.rows.back();
  std::printf("rounds=%zu kkt_rv=%s kkt_rx=%s lyapunov=%s\n", res.rows.size(),
              format_double(last.kkt_rv).c_str(), format_double(last.kkt_rx).c_str(),
              format_double(last.lyapunov).c_str());
  return 0;
}

int cmd_quantizer_bench(const std::vector<std::size_t>& dims,
                        const std::vector<std::uint32_t>& levels, std::size_t trials,
                        std::uint64_t seed) {
  const auto rows = quantizer_bench(dims, levels, trials, seed);
  std::printf("%8s %6s %12s %12s %12s %12s %12s\n", "d", "s", "bias_inf", "max_stderr", "mse",
              "bound", "mean_bits");
  for (const auto& r : rows)
    std::printf("%8zu %6u %12.4e %12.4e %12.4e %12.4e %12.1f\n", r.dim, r.s, r.bias_inf,
                r.max_stderr, r.mse, r.bound, r.mean_bits);
  return 0;
}

int cmd_tv_demo(const TvDemoConfig& cfg, std::size_t threads) {
  const TvDemoResult res = run_tv_demo(cfg, threads);
  std::printf("mu_best=%s psnr=%.4f psnr_ls_only=%.4f uplink_bits=%llu\n",
              format_double(res.mu_best).c_str(), res.psnr_best, res.psnr_ls,
              static_cast<unsigned long long>(res.uplink_bits));
  return 0;
}

// Materialize the shards a run would use: same load/split/partition chain.
int cmd_partition(const ExperimentConfig& cfg, const std::string& out_dir) {
  BuiltExperiment built = build_experiment(cfg);
  std::filesystem::create_directories(out_dir);
  const std::string manifest_path = out_dir + "/manifest.txt";
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DataError(manifest_path + ": cannot open for writing");
  manifest << "seed " << cfg.seed << "\nclients " << built.problem.shards.size() << "\n";
  for (std::size_t c = 0; c < built.problem.shards.size(); ++c) {
    const LossShard& s = built.problem.shards[c];
    const std::string file = "shard_" + std::to_string(c) + ".libsvm";
    Dataset ds;
    ds.d = built.train.d;
    ds.rows = s.samples;
    ds.labels = s.targets;
    std::ofstream out(out_dir + "/" + file);
    if (!out) throw DataError(out_dir + "/" + file + ": cannot open for writing");
    write_libsvm(out, ds);
    manifest << c << ' ' << file << ' ' << s.samples.rows << '\n';
  }
  std::printf("wrote %zu shards to %s\n", built.problem.shards.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated composite-optimization toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, out_dir, image_path;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--seed", seed, "override run.seed");
  run->add_option("--out", out_path, "override run.out (metrics CSV path)");
  run->add_option("--threads", threads, "client-update worker threads");

  auto* diag = app.add_subcommand("diagnose",
                                  "run with Lyapunov/KKT columns against a cached reference");
  std::size_t ref_rounds = 200000;
  diag->add_option("--config", config_path, "experiment config file")->required();
  diag->add_option("--seed", seed, "override run.seed");
  diag->add_option("--out", out_path, "override run.out (metrics CSV path)");
  diag->add_option("--ref-rounds", ref_rounds, "serial rounds used to compute a missing reference");
  diag->add_option("--threads", threads, "client-update worker threads");

  auto* bench = app.add_subcommand("quantizer-bench", "empirical quantizer moments and bit costs");
  std::vector<std::size_t> dims{123};
  std::vector<std::uint32_t> levels{1, 4, 16, 64};
  std::size_t trials = 10000;
  bench->add_option("--dim", dims, "vector dimensions");
  bench->add_option("--levels", levels, "quantization level counts");
  bench->add_option("--trials", trials, "Monte Carlo trials per cell");
  bench->add_option("--seed", seed, "stream seed");

  auto* tv = app.add_subcommand("tv-demo", "toy federated TV-regularized image recovery");
  TvDemoConfig tv_cfg;
  tv->add_option("--side", tv_cfg.side, "image side length");
  tv->add_option("--noise-var", tv_cfg.noise_var, "measurement noise variance");
  tv->add_option("--clients", tv_cfg.clients, "client count");
  tv->add_option("--rounds", tv_cfg.rounds, "rounds per grid point");
  tv->add_option("--s", tv_cfg.s, "quantization levels (0 = off)");
  tv->add_option("--block-size", tv_cfg.block_size, "quantizer block size (0 = one block)");
  tv->add_option("--mu-grid", tv_cfg.mu_grid, "TV weights to try");
  tv->add_option("--seed", tv_cfg.seed, "stream seed");
  tv->add_option("--out", tv_cfg.metrics_out, "metrics CSV for the best run");
  tv->add_option("--image", tv_cfg.image_out, "recovered image file");
  tv->add_option("--threads", threads, "client-update worker threads");

  auto* part = app.add_subcommand("partition", "materialize the client shards of a config");
  part->add_option("--config", config_path, "experiment config file")->required();
  part->add_option("--seed", seed, "override run.seed");
  part->add_option("--out-dir", out_dir, "directory for shard files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // flag errors are config errors
  }

  try {
    if (run->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, run, seed, out_path);
      return cmd_run(cfg, threads);
    }
    if (diag->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      apply_overrides(cfg, diag, seed, out_path);
      return cmd_diagnose(cfg, ref_rounds, threads);
    }
    if (bench->parsed()) return cmd_quantizer_bench(dims, levels, trials, seed);
    if (tv->parsed()) return cmd_tv_demo(tv_cfg, threads);
    if (part->parsed()) {
      ExperimentConfig cfg = load_config(config_path);
      if (part->count("--seed") > 0) cfg.seed = seed;
      return cmd_partition(cfg, out_dir);
    }
  } catch (const fpdfp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const fpdfp::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

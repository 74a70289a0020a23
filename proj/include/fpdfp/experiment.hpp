#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fpdfp/config.hpp"
#include "fpdfp/dataio.hpp"
#include "fpdfp/fedsim.hpp"
#include "fpdfp/linops.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/quantize.hpp"
#include "fpdfp/solvers.hpp"

namespace fpdfp {

/* Experiment orchestration: turn an ExperimentConfig into a ProblemSpec plus
 * FedConfig, drive the rounds, evaluate metrics, and read/write the artifacts
 * (metrics CSV, saddle-point reference, recovered images). */

// out = H y for the envelope Hessian of the smooth part: exact for least
// squares, the sigmoid'(z) <= 1/4 envelope for logistic (plus the ridge).
inline Vec hessian_envelope_apply(const ProblemSpec& p, const Vec& y) {
  Vec out(y.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(p.shards.size());
  Vec tmp;
  for (const auto& shard : p.shards) {
    tmp.assign(shard.samples.rows, 0.0);
    for (std::size_t r = 0; r < shard.samples.rows; ++r) tmp[r] = shard.samples.row_dot(r, y);
    double w = inv_n;
    if (shard.kind == LossKind::logistic)
      w *= 0.25 / static_cast<double>(shard.samples.rows);
    else
      w *= shard.unnormalized ? 1.0 : 1.0 / static_cast<double>(shard.samples.rows);
    for (std::size_t r = 0; r < shard.samples.rows; ++r)
      shard.samples.add_scaled_row(r, w * tmp[r], out);
    if (shard.kind == LossKind::logistic) axpy(inv_n * shard.mu1, y, out);
  }
  return out;
}

// Power iteration on the envelope Hessian; an upper-curvature estimate L so
// that gamma = 1/L is a safe default step.
inline double estimate_lipschitz(const ProblemSpec& p, std::size_t max_iter = 300,
                                 double tol = 1e-6, std::uint64_t seed = 0x11b5) {
  const std::size_t d = p.B->cols();
  Rng rng(Rng::key(seed, 0x715));
  Vec y(d);
  for (double& v : y) v = rng.uniform(-1.0, 1.0);
  double yn = nrm2(y);
  if (yn == 0.0) y[0] = yn = 1.0;
  scale(y, 1.0 / yn);
  double lambda = 0.0, lambda_prev = 0.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vec w = hessian_envelope_apply(p, y);
    lambda = dot(y, w);
    const double wn = nrm2(w);
    if (wn == 0.0) return 0.0;
    for (std::size_t i = 0; i < d; ++i) y[i] = w[i] / wn;
    if (it > 0 && std::fabs(lambda - lambda_prev) <= tol * std::max(1.0, std::fabs(lambda))) break;
    lambda_prev = lambda;
  }
  return lambda;
}

// Mean per-sample data loss on a held-out set (no regularization terms).
inline double data_loss(const CsrMatrix& rows, const Vec& labels, LossKind kind, const Vec& x) {
  require(rows.rows == labels.size(), "data_loss: row/label mismatch");
  require(rows.rows >= 1, "data_loss: empty evaluation set");
  double s = 0.0;
  for (std::size_t r = 0; r < rows.rows; ++r) {
    const double z = rows.row_dot(r, x);
    if (kind == LossKind::logistic) {
      s += log1p_exp(-labels[r] * z);
    } else {
      const double e = z - labels[r];
      s += 0.5 * e * e;
    }
  }
  return s / static_cast<double>(rows.rows);
}

struct BuiltExperiment {
  ProblemSpec problem;
  FedConfig fed;
  Dataset train, test;  // test empty when not configured
};

inline BuiltExperiment build_experiment(const ExperimentConfig& cfg) {
  if (cfg.train_path.empty()) throw ConfigError("data.train is required");
  if (!cfg.test_path.empty() && cfg.split_train > 0)
    throw ConfigError("data.test and data.split_train are mutually exclusive");
  if ((cfg.split_train > 0) != (cfg.split_test > 0))
    throw ConfigError("data.split_train and data.split_test must be given together");

  BuiltExperiment built;
  Dataset full = load_libsvm(cfg.train_path, cfg.features);
  if (!cfg.test_path.empty()) {
    built.test = load_libsvm(cfg.test_path, cfg.features);
    const std::size_t d = std::max(full.d, built.test.d);
    full.d = full.rows.cols = d;
    built.test.d = built.test.rows.cols = d;
    built.train = std::move(full);
  } else if (cfg.split_train > 0) {
    if (cfg.split_train + cfg.split_test > full.size())
      throw ConfigError("data.split_train + data.split_test exceed the dataset size");
    TrainTestSplit sp = split_train_test(full, cfg.split_train, cfg.split_test, cfg.seed);
    built.train = std::move(sp.train);
    built.test = std::move(sp.test);
  } else {
    built.train = std::move(full);
  }

  ShardParams params{cfg.loss, cfg.mu1, cfg.unnormalized};
  built.problem.shards = partition(built.train, cfg.clients, cfg.seed, params);

  const std::size_t d = built.train.d;
  if (cfg.op == OperatorKind::identity) {
    built.problem.B = std::make_shared<IdentityOp>(d);
  } else {
    SparseMatrix g = cfg.graph_path.empty()
                         ? build_graph_matrix(built.train, cfg.graph_threshold)
                         : load_matrix(cfg.graph_path);
    if (g.cols != d)
      throw DataError("graph matrix has " + std::to_string(g.cols) + " columns, expected " +
                      std::to_string(d));
    std::vector<OpPtr> blocks;
    blocks.push_back(std::make_shared<SparseMatrixOp>(g));
    blocks.push_back(std::make_shared<IdentityOp>(d));
    built.problem.B = std::make_shared<VStackOp>(std::move(blocks));
  }

  built.problem.reg = cfg.regularizer == RegKind::l1 ? l1_reg(cfg.mu2)
                                                     : group_l2_reg(cfg.mu2, cfg.group_size);

  FedConfig& fed = built.fed;
  fed.num_clients = cfg.clients;
  fed.participating = cfg.participating;
  fed.batch_size = cfg.batch;
  fed.rounds = cfg.rounds;
  fed.local_steps = cfg.tau;
  fed.quant = QuantizerSpec{cfg.s, cfg.block_size};
  fed.algorithm = cfg.algorithm;
  fed.seed = cfg.seed;

  if (cfg.algorithm == Algorithm::fpdfp_identity) {
    if (cfg.op != OperatorKind::identity)
      throw ConfigError("algorithm fpdfp-identity requires operator = identity");
    fed.lambda = 1.0;
  } else if (cfg.algorithm == Algorithm::fpdfp) {
    fed.lambda = cfg.lambda > 0.0 ? cfg.lambda : default_coupling(*built.problem.B, cfg.seed);
  } else {
    fed.lambda = 1.0;  // baselines ignore the coupling
  }
  built.problem.lambda = fed.lambda;

  if (cfg.schedule == StepSchedule::Kind::constant) {
    const double gamma =
        cfg.gamma > 0.0 ? cfg.gamma : 1.0 / estimate_lipschitz(built.problem);
    fed.schedule = StepSchedule::constant(gamma);
  } else {
    if (cfg.d1 <= 0.0) throw ConfigError("schedule = decreasing requires federation.d1");
    fed.schedule = StepSchedule::decreasing(cfg.d1);
  }

  try {
    validate_fed(built.problem, fed);
  } catch (const std::invalid_argument& err) {
    throw ConfigError(err.what());
  }
  return built;
}

inline void save_reference(const std::string& path, const PdState& ref) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << ref.x.size() << ' ' << ref.v.size() << '\n';
  char buf[40];
  for (std::size_t i = 0; i < ref.x.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", ref.x[i]);
    out << buf << (i + 1 == ref.x.size() ? '\n' : ' ');
  }
  for (std::size_t i = 0; i < ref.v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", ref.v[i]);
    out << buf << (i + 1 == ref.v.size() ? '\n' : ' ');
  }
}

inline PdState load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::size_t d = 0, m = 0;
  if (!(in >> d >> m)) throw DataError(path + ": malformed reference header");
  PdState ref{Vec(d), Vec(m)};
  for (auto& v : ref.x)
    if (!(in >> v)) throw DataError(path + ": truncated primal reference");
  for (auto& v : ref.v)
    if (!(in >> v)) throw DataError(path + ": truncated dual reference");
  return ref;
}

struct ExperimentResult {
  std::vector<MetricsRow> rows;
  ServerState state;
  BuiltExperiment built;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << metrics_header() << '\n';
  for (const auto& r : rows) out << format_metrics_row(r) << '\n';
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t threads = 1) {
  ExperimentResult result;
  result.built = build_experiment(cfg);
  const ProblemSpec& problem = result.built.problem;
  const FedConfig& fed = result.built.fed;

  bool have_ref = false;
  PdState ref;
  if (!cfg.reference.empty() && cfg.algorithm == Algorithm::fpdfp) {
    ref = load_reference(cfg.reference);
    if (ref.x.size() != problem.B->cols() || ref.v.size() != problem.B->rows())
      throw DataError(cfg.reference + ": reference shape does not match the problem");
    have_ref = true;
  }

  ServerState server;
  server.pd = make_initial_state(problem.B->cols(), problem.B->rows());
  result.rows.reserve(fed.rounds);
  const bool logistic = cfg.loss == LossKind::logistic;

  for (std::size_t k = 0; k < fed.rounds; ++k) {
    const RoundOutcome outcome = run_round(server, problem, fed, threads);
    MetricsRow row;
    row.round = k;
    row.gamma = outcome.gamma;
    row.train_loss = composite_objective(problem, server.pd.x);
    row.uplink_bits_cum = server.uplink_bits_cum;
    if (result.built.test.size() > 0) {
      row.test_loss = data_loss(result.built.test.rows, result.built.test.labels, cfg.loss,
                                server.pd.x);
      if (logistic)
        row.test_accuracy = accuracy(result.built.test.rows, result.built.test.labels,
                                     server.pd.x);
    }
    if (fed.algorithm == Algorithm::fpdfp) {
      const KktResidual kkt =
          kkt_residual(problem, server.pd.x, server.pd.v, outcome.gamma, fed.lambda);
      row.kkt_rv = kkt.rv;
      row.kkt_rx = kkt.rx;
      if (have_ref)
        row.lyapunov = lyapunov(server.pd.x, server.pd.v, ref.x, ref.v, outcome.gamma,
                                fed.lambda);
    }
    result.rows.push_back(row);
  }
  result.state = std::move(server);
  if (!cfg.out.empty()) write_metrics_csv(cfg.out, result.rows);
  return result;
}

/* diagnose: make sure the saddle-point reference exists (computing it with
 * the exact-gradient serial solver if absent), then run the configured
 * experiment with the Lyapunov column filled against that reference. */
inline ExperimentResult diagnose(const ExperimentConfig& cfg, std::size_t ref_rounds,
                                 std::size_t threads = 1) {
  if (cfg.algorithm != Algorithm::fpdfp)
    throw ConfigError("diagnose requires algorithm = fpdfp");
  if (cfg.reference.empty()) throw ConfigError("diagnose requires run.reference");
  if (!std::filesystem::exists(cfg.reference)) {
    BuiltExperiment built = build_experiment(cfg);
    const double gamma = built.fed.schedule.kind == StepSchedule::Kind::constant
                             ? built.fed.schedule.gamma
                             : 1.0 / estimate_lipschitz(built.problem);
    const SolveResult sol = pdfp_solve(built.problem, StepSchedule::constant(gamma),
                                       built.fed.lambda, ref_rounds);
    save_reference(cfg.reference, sol.state);
  }
  return run_experiment(cfg, threads);
}

// ---- quantizer bench ----

struct QuantBenchRow {
  std::size_t dim = 0;
  std::uint32_t s = 0;
  double bias_inf = 0.0;    // max_i |mean error_i|
  double max_stderr = 0.0;  // max_i stderr of the per-coordinate error
  double mse = 0.0;         // mean ||Q(x) - x||^2
  double bound = 0.0;       // min(d/s^2, sqrt(d)/s) ||x||^2
  double mean_bits = 0.0;   // mean encoded size per message
};

inline std::vector<QuantBenchRow> quantizer_bench(const std::vector<std::size_t>& dims,
                                                  const std::vector<std::uint32_t>& levels,
                                                  std::size_t trials, std::uint64_t seed) {
  require(trials >= 2, "quantizer bench: need at least two trials");
  std::vector<QuantBenchRow> rows;
  for (std::size_t d : dims) {
    Vec x(d);
    Rng xrng(Rng::key(seed, d, 0x77));
    for (double& v : x) v = xrng.normal();
    for (std::uint32_t s : levels) {
      QuantBenchRow row;
      row.dim = d;
      row.s = s;
      Vec mean_e(d, 0.0), mean_e2(d, 0.0);
      double mse = 0.0, bits = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        Rng rng(Rng::key(seed, d, s, t));
        const QuantizedVector q = quantize(x, s, rng);
        bits += static_cast<double>(encoded_bits(q));
        const Vec y = dequantize(q);
        double sq = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double e = y[i] - x[i];
          mean_e[i] += e;
          mean_e2[i] += e * e;
          sq += e * e;
        }
        mse += sq;
      }
      const double inv = 1.0 / static_cast<double>(trials);
      for (std::size_t i = 0; i < d; ++i) {
        mean_e[i] *= inv;
        mean_e2[i] *= inv;
        const double var = std::max(0.0, mean_e2[i] - mean_e[i] * mean_e[i]);
        row.max_stderr = std::max(row.max_stderr, std::sqrt(var * inv));
        row.bias_inf = std::max(row.bias_inf, std::fabs(mean_e[i]));
      }
      row.mse = mse * inv;
      row.bound = quantizer_variance_bound(d, s, nrm2_sq(x));
      row.mean_bits = bits * inv;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---- TV toy demo ----

// Peak signal-to-noise against a nonnegative ground truth with peak max(x0).
inline double psnr(const Vec& x, const Vec& x0) {
  require_same_size(x, x0, "psnr");
  double peak = 0.0;
  for (double v : x0) peak = std::max(peak, v);
  require(peak > 0.0, "psnr: ground truth peak must be positive");
  const double err = dist_sq(x, x0);
  return 10.0 * std::log10(peak * peak * static_cast<double>(x0.size()) / err);
}

// Deterministic piecewise-constant test image on [0,1]^2, values in [0, 0.9].
inline Vec make_phantom(std::size_t side) {
  require(side >= 8, "phantom: side must be >= 8");
  Vec img(side * side, 0.1);
  const double s = static_cast<double>(side);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double y = (static_cast<double>(r) + 0.5) / s;
      const double x = (static_cast<double>(c) + 0.5) / s;
      double& px = img[r * side + c];
      if (y >= 0.125 && y < 0.5 && x >= 0.125 && x < 0.5) px = 0.9;
      const double dy = y - 0.6, dx = x - 0.65;
      if (dy * dy + dx * dx < 0.22 * 0.22) px = 0.55;
      if (y >= 0.75 && y < 0.85 && x >= 0.1 && x < 0.9) px = 0.35;
    }
  return img;
}

// Random sparse diagonally-dominant measurement operator (d x d, invertible).
inline SparseMatrix make_measurement_matrix(std::size_t d, std::uint64_t seed) {
  SparseMatrix m;
  m.rows = m.cols = d;
  Rng rng(Rng::key(seed, 0xA7A));
  for (std::size_t r = 0; r < d; ++r) {
    m.entries.push_back({r, r, 1.5 + 0.5 * rng.uniform()});
    std::size_t placed = 0;
    std::vector<std::size_t> used{r};
    while (placed < 3) {
      const std::size_t c = static_cast<std::size_t>(rng.below(d));
      if (std::find(used.begin(), used.end(), c) != used.end()) continue;
      used.push_back(c);
      const double mag = 0.1 + 0.2 * rng.uniform();
      m.entries.push_back({r, c, rng.uniform() < 0.5 ? -mag : mag});
      ++placed;
    }
  }
  return m;
}

// Recovered image file: u32 ndim, u32 dims[ndim], float32 data (native order).
inline void write_image(const std::string& path, const Vec& img,
                        const std::vector<std::uint32_t>& dims) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  const std::uint32_t nd = static_cast<std::uint32_t>(dims.size());
  out.write(reinterpret_cast<const char*>(&nd), sizeof nd);
  for (std::uint32_t dim : dims) out.write(reinterpret_cast<const char*>(&dim), sizeof dim);
  for (double v : img) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
}

struct TvDemoConfig {
  std::size_t side = 32;
  double noise_var = 0.02;
  std::vector<double> mu_grid = {1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0};
  std::size_t clients = 4;
  std::size_t rounds = 1500;
  std::uint32_t s = 0;  // quantization off by default
  std::size_t block_size = 0;
  std::uint64_t seed = 1;
  std::string metrics_out;
  std::string image_out;
};

struct TvDemoResult {
  double mu_best = 0.0;
  double psnr_best = 0.0;
  double psnr_ls = 0.0;  // mu = 0 pipeline on the same noisy data
  Vec recovered;
  Vec ground_truth;
  std::vector<MetricsRow> rows;  // metrics of the best-mu run
  std::uint64_t uplink_bits = 0;
};

/* Federated TV-regularized reconstruction on a synthetic piecewise-constant
 * image: A x0 + noise is measured, rows of A are dealt to the clients, B is
 * the 2-D forward-difference gradient and g the isotropic-TV group norm.
 * The data term is kept unnormalized and the TV weight is divided by N, so
 * the federated objective is (1/N) (0.5 ||Ax - b||^2 + mu TV(x)): same
 * minimizer as the textbook form. mu is tuned over a small grid; the mu = 0
 * run is the least-squares-only baseline.
 */
inline TvDemoResult run_tv_demo(const TvDemoConfig& cfg, std::size_t threads = 1) {
  require(cfg.clients >= 1, "tv demo: need at least one client");
  require(!cfg.mu_grid.empty(), "tv demo: mu grid must be nonempty");
  const std::size_t side = cfg.side, d = side * side;

  TvDemoResult result;
  result.ground_truth = make_phantom(side);
  const SparseMatrix a = make_measurement_matrix(d, cfg.seed);
  const SparseMatrixOp a_op(a);
  Vec b = matvec(a_op, result.ground_truth);
  Rng noise(Rng::key(cfg.seed, 0xE015E));
  const double sigma = std::sqrt(cfg.noise_var);
  for (double& v : b) v += sigma * noise.normal();

  // Deal measurement rows to clients round-robin (seeded shuffle).
  Dataset meas;
  meas.d = d;
  meas.rows = a_op.csr();
  meas.labels = b;
  ShardParams params{LossKind::least_squares, 0.0, true};
  std::vector<LossShard> shards = partition(meas, cfg.clients, cfg.seed, params);

  ProblemSpec problem;
  problem.shards = std::move(shards);
  problem.B = std::make_shared<DiscreteGradientOp>(std::vector<std::size_t>{side, side});
  problem.lambda = default_coupling(*problem.B, cfg.seed);
  const double n_scale = static_cast<double>(cfg.clients);

  problem.reg = group_l2_reg(0.0, 2);
  const double gamma = 1.0 / estimate_lipschitz(problem);

  auto run_once = [&](double mu) {
    problem.reg = group_l2_reg(mu / n_scale, 2);
    FedConfig fed;
    fed.num_clients = cfg.clients;
    fed.participating = cfg.clients;
    fed.batch_size = 0;
    fed.rounds = cfg.rounds;
    fed.quant = QuantizerSpec{cfg.s, cfg.block_size};
    fed.schedule = StepSchedule::constant(gamma);
    fed.lambda = problem.lambda;
    fed.algorithm = Algorithm::fpdfp;
    fed.seed = cfg.seed;
    validate_fed(problem, fed);
    ServerState server;
    server.pd = make_initial_state(d, problem.B->rows());
    std::vector<MetricsRow> rows;
    rows.reserve(fed.rounds);
    for (std::size_t k = 0; k < fed.rounds; ++k) {
      const RoundOutcome outcome = run_round(server, problem, fed, threads);
      MetricsRow row;
      row.round = k;
      row.gamma = outcome.gamma;
      row.train_loss = composite_objective(problem, server.pd.x);
      row.uplink_bits_cum = server.uplink_bits_cum;
      const KktResidual kkt =
          kkt_residual(problem, server.pd.x, server.pd.v, outcome.gamma, fed.lambda);
      row.kkt_rv = kkt.rv;
      row.kkt_rx = kkt.rx;
      rows.push_back(row);
    }
    return std::pair<ServerState, std::vector<MetricsRow>>{std::move(server), std::move(rows)};
  };

  {
    auto [server, rows] = run_once(0.0);
    result.psnr_ls = psnr(server.pd.x, result.ground_truth);
  }
  result.psnr_best = -1e300;
  for (double mu : cfg.mu_grid) {
    auto [server, rows] = run_once(mu);
    const double p = psnr(server.pd.x, result.ground_truth);
    if (p > result.psnr_best) {
      result.psnr_best = p;
      result.mu_best = mu;
      result.recovered = server.pd.x;
      result.rows = std::move(rows);
      result.uplink_bits = server.uplink_bits_cum;
    }
  }

  if (!cfg.metrics_out.empty()) write_metrics_csv(cfg.metrics_out, result.rows);
  if (!cfg.image_out.empty())
    write_image(cfg.image_out, result.recovered,
                {static_cast<std::uint32_t>(side), static_cast<std::uint32_t>(side)});
  return result;
}

}  // namespace fpdfp

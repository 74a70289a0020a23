#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fpdfp/linops.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/prox.hpp"
#include "fpdfp/quantize.hpp"
#include "fpdfp/rng.hpp"
#include "fpdfp/solvers.hpp"
#include "fpdfp/vec.hpp"

namespace fpdfp {

/* Federated simulation of the primal-dual fixed-point iteration.
 *
 * Each round the server samples n of N clients; every sampled client takes
 * one primal-dual step from the global (x_k, v_k) using a minibatch gradient
 * of its own shard and uploads the quantized primal increment together with
 * its quantized dual; the server averages the decoded messages. Baselines
 * (local-SGD averaging with raw or quantized-delta uplinks) share the same
 * harness. Every random draw comes from a stream keyed by (seed, round,
 * client, purpose) and aggregation runs in ascending client order, so a run
 * is a pure function of its seed regardless of the thread count.
 */

enum class Algorithm { fpdfp, fpdfp_identity, fedavg, fedpaq };

// s == 0 means quantization off: payloads travel as raw 64-bit vectors and
// are charged the pass-through cost of 32 bits per coordinate.
struct QuantizerSpec {
  std::uint32_t s = 0;
  std::size_t block_size = 0;  // 0 = one block
};

struct FedConfig {
  std::size_t num_clients = 1;    // N
  std::size_t participating = 1;  // n <= N per round
  std::size_t batch_size = 0;     // b; 0 = exact shard gradient
  std::size_t rounds = 1;         // K
  std::size_t local_steps = 1;    // tau; baselines only
  QuantizerSpec quant;
  StepSchedule schedule = StepSchedule::constant(1.0);
  double lambda = 0.0;  // resolved to 1/rho_max(B B^T) by the runner if <= 0
  Algorithm algorithm = Algorithm::fpdfp;
  std::uint64_t seed = 0;
};

struct ServerState {
  PdState pd;
  std::uint64_t uplink_bits_cum = 0;
  std::size_t round = 0;
};

namespace stream {
inline constexpr std::uint64_t sample = 0xA1;  // client selection (per round)
inline constexpr std::uint64_t batch = 0xB2;   // minibatch draws (per round, client)
inline constexpr std::uint64_t qx = 0xC3;      // primal-delta quantization
inline constexpr std::uint64_t qv = 0xD4;      // dual quantization
inline constexpr std::uint64_t server = 0xFFFFFFFFULL;
}  // namespace stream

// Uniform without-replacement sample of n client ids, returned ascending.
inline std::vector<std::size_t> sample_clients(std::size_t num_clients, std::size_t n,
                                               std::uint64_t seed, std::size_t round) {
  require(n >= 1 && n <= num_clients, "sample_clients: need 1 <= n <= N");
  std::vector<std::size_t> ids(num_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(Rng::key(seed, round, stream::server, stream::sample));
  rng.prefix_shuffle(ids, n);
  ids.resize(n);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/* Uplink payload: either the exact vector (quantization off) or the encoded
 * block form. bits() is the accounting contract: 32 bits per coordinate for
 * pass-through, encoded_bits otherwise. */
struct UplinkPayload {
  bool quantized = false;
  Vec raw;
  BlockQuantized enc;

  Vec decode() const { return quantized ? dequantize_blocks(enc) : raw; }
  std::uint64_t bits() const {
    return quantized ? static_cast<std::uint64_t>(encoded_bits(enc))
                     : static_cast<std::uint64_t>(32 * raw.size());
  }
};

inline UplinkPayload make_payload(Vec value, const QuantizerSpec& quant, Rng& rng) {
  UplinkPayload p;
  if (quant.s == 0) {
    p.raw = std::move(value);
    return p;
  }
  p.quantized = true;
  p.enc = quantize_blocks(value, quant.s, quant.block_size, rng);
  return p;
}

struct ClientMessage {
  std::size_t client = 0;
  UplinkPayload delta_x;
  std::optional<UplinkPayload> dual;
  std::uint64_t uplink_bits = 0;
};

// Static block split of [0, n) across a fixed thread count; fn(i) must only
// touch slot i of shared output. threads == 1 stays on the calling thread.
template <typename Fn>
inline void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t t = std::min(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (std::size_t w = 0; w < t; ++w) {
    const std::size_t lo = n * w / t, hi = n * (w + 1) / t;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// One client's work for round k: gradient, local update, uplink encoding.
inline ClientMessage client_update(const PdState& global, const ProblemSpec& problem,
                                   const FedConfig& cfg, std::size_t k, std::size_t client,
                                   double gamma) {
  const LossShard& shard = problem.shards[client];
  Rng batch_rng(Rng::key(cfg.seed, k, client, stream::batch));
  const Vec grad = cfg.batch_size == 0
                       ? shard_gradient(shard, global.x)
                       : minibatch_gradient(shard, global.x, cfg.batch_size, batch_rng);

  ClientMessage msg;
  msg.client = client;
  Rng qx_rng(Rng::key(cfg.seed, k, client, stream::qx));

  switch (cfg.algorithm) {
    case Algorithm::fpdfp: {
      const PdState local =
          pdfp_step_with_gradient(global, grad, problem.reg, *problem.B, gamma, cfg.lambda);
      msg.delta_x = make_payload(sub(local.x, global.x), cfg.quant, qx_rng);
      Rng qv_rng(Rng::key(cfg.seed, k, client, stream::qv));
      msg.dual = make_payload(local.v, cfg.quant, qv_rng);
      break;
    }
    case Algorithm::fpdfp_identity: {
      // B = I, lambda = 1 collapses the step to a proximal gradient update
      // and only the primal increment travels uplink.
      Vec y(global.x.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = global.x[i] - gamma * grad[i];
      Vec x1 = prox_g(problem.reg, y, gamma);
      msg.delta_x = make_payload(sub(x1, global.x), cfg.quant, qx_rng);
      break;
    }
    case Algorithm::fedavg:
    case Algorithm::fedpaq: {
      Vec x = global.x;
      for (std::size_t t = 0; t < cfg.local_steps; ++t) {
        const Vec g = t == 0 ? grad
                             : (cfg.batch_size == 0
                                    ? shard_gradient(shard, x)
                                    : minibatch_gradient(shard, x, cfg.batch_size, batch_rng));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] - gamma * g[i];
      }
      if (cfg.algorithm == Algorithm::fedavg) {
        UplinkPayload p;  // raw parameter vector, never quantized
        p.raw = std::move(x);
        msg.delta_x = std::move(p);
      } else {
        msg.delta_x = make_payload(sub(x, global.x), cfg.quant, qx_rng);
      }
      break;
    }
  }
  msg.uplink_bits = msg.delta_x.bits() + (msg.dual ? msg.dual->bits() : 0);
  return msg;
}

// x_k + (1/n) sum of decoded primal increments, ascending client order.
inline Vec aggregate_primal(const Vec& x_k, const std::vector<ClientMessage>& msgs) {
  require(!msgs.empty(), "aggregate: no messages");
  Vec acc(x_k.size(), 0.0);
  for (const auto& m : msgs) axpy(1.0, m.delta_x.decode(), acc);
  const double inv = 1.0 / static_cast<double>(msgs.size());
  Vec out(x_k.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x_k[i] + inv * acc[i];
  return out;
}

// (1/n) sum of decoded duals (the server dual is replaced, not incremented).
inline Vec aggregate_dual(std::size_t m_dim, const std::vector<ClientMessage>& msgs) {
  Vec acc(m_dim, 0.0);
  for (const auto& m : msgs) {
    require(m.dual.has_value(), "aggregate: missing dual message");
    axpy(1.0, m.dual->decode(), acc);
  }
  scale(acc, 1.0 / static_cast<double>(msgs.size()));
  return acc;
}

// Plain parameter averaging for the raw-uplink baseline.
inline Vec aggregate_mean_params(std::size_t d, const std::vector<ClientMessage>& msgs) {
  Vec acc(d, 0.0);
  for (const auto& m : msgs) axpy(1.0, m.delta_x.decode(), acc);
  scale(acc, 1.0 / static_cast<double>(msgs.size()));
  return acc;
}

inline void validate_fed(const ProblemSpec& problem, const FedConfig& cfg) {
  validate_problem(problem);
  require(cfg.num_clients == problem.shards.size(),
          "fed config: N must equal the number of shards");
  require(cfg.participating >= 1 && cfg.participating <= cfg.num_clients,
          "fed config: need 1 <= n <= N");
  if (cfg.batch_size > 0)
    for (const auto& s : problem.shards)
      require(cfg.batch_size <= s.samples.rows, "fed config: batch size exceeds a shard");
  require(cfg.local_steps >= 1, "fed config: tau must be >= 1");
  if (cfg.algorithm == Algorithm::fpdfp)
    require(cfg.lambda > 0.0, "fed config: lambda must be resolved > 0");
  if (cfg.algorithm == Algorithm::fpdfp_identity)
    require(dynamic_cast<const IdentityOp*>(problem.B.get()) != nullptr,
            "fed config: the identity variant requires B = I");
}

struct RoundOutcome {
  double gamma = 0.0;
  std::uint64_t uplink_bits = 0;
};

// One synchronous round; server state advances in place. validate_fed is the
// caller's job (once per run, not per round).
inline RoundOutcome run_round(ServerState& server, const ProblemSpec& problem,
                              const FedConfig& cfg, std::size_t threads = 1) {
  const std::size_t k = server.round;
  const double gamma = step_size(cfg.schedule, k);
  const std::vector<std::size_t> selected =
      sample_clients(cfg.num_clients, cfg.participating, cfg.seed, k);

  std::vector<ClientMessage> msgs(selected.size());
  parallel_for(selected.size(), threads, [&](std::size_t t) {
    msgs[t] = client_update(server.pd, problem, cfg, k, selected[t], gamma);
  });

  switch (cfg.algorithm) {
    case Algorithm::fpdfp:
      server.pd.x = aggregate_primal(server.pd.x, msgs);
      server.pd.v = aggregate_dual(server.pd.v.size(), msgs);
      break;
    case Algorithm::fpdfp_identity:
    case Algorithm::fedpaq:
      server.pd.x = aggregate_primal(server.pd.x, msgs);
      break;
    case Algorithm::fedavg:
      server.pd.x = aggregate_mean_params(server.pd.x.size(), msgs);
      break;
  }

  RoundOutcome out;
  out.gamma = gamma;
  for (const auto& m : msgs) out.uplink_bits += m.uplink_bits;
  server.uplink_bits_cum += out.uplink_bits;
  server.round += 1;
  return out;
}

// Quadratic distance to a reference saddle point; the dual term carries the
// gamma^2 / lambda weight, so doubling lambda halves the dual contribution.
inline double lyapunov(const Vec& x, const Vec& v, const Vec& x_star, const Vec& v_star,
                       double gamma, double lambda) {
  require(lambda > 0.0, "lyapunov: lambda must be > 0");
  return dist_sq(x, x_star) + (gamma * gamma / lambda) * dist_sq(v, v_star);
}

struct RecurrenceReport {
  bool ok = true;
  double max_rel_violation = 0.0;  // most positive (delta - bound)/max(1, bound)
};

/* Worst-case check of the contraction lemma behind the O(1/k) rate: iterate
 *   delta_{k+1} = (1 - 2/(k+c)) delta_k + a/(k+c)^2
 * from delta_{k0} = delta0 and verify
 *   delta_k <= (k0+c)^2/(k+c)^2 delta0 + a/(k+c)
 * at every k in [k0, k_max], within rel_slack.
 */
inline RecurrenceReport rate_recurrence_check(double delta0, double a, double c, std::size_t k0,
                                              std::size_t k_max, double rel_slack = 1e-12) {
  require(delta0 >= 0.0 && a >= 0.0, "rate check: delta0 and a must be >= 0");
  require(c > 0.0, "rate check: c must be > 0");
  require(k_max >= k0, "rate check: k_max must be >= k0");
  RecurrenceReport rep;
  const double base = (static_cast<double>(k0) + c) * (static_cast<double>(k0) + c) * delta0;
  double delta = delta0;
  for (std::size_t k = k0;; ++k) {
    const double t = static_cast<double>(k) + c;
    const double bound = base / (t * t) + a / t;
    const double viol = (delta - bound) / std::max(1.0, bound);
    if (viol > rep.max_rel_violation) rep.max_rel_violation = viol;
    if (viol > rel_slack) rep.ok = false;
    if (k == k_max) break;
    delta = (1.0 - 2.0 / t) * delta + a / (t * t);
  }
  return rep;
}

/* Per-round metrics row. Fields without a defined value for a given run
 * (accuracy on regression, diagnostics without a reference) are NaN and are
 * serialized as "nan". */
struct MetricsRow {
  std::size_t round = 0;
  double gamma = 0.0;
  double train_loss = 0.0;
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  double test_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t uplink_bits_cum = 0;
  double lyapunov = std::numeric_limits<double>::quiet_NaN();
  double kkt_rv = std::numeric_limits<double>::quiet_NaN();
  double kkt_rx = std::numeric_limits<double>::quiet_NaN();
};

inline const char* metrics_header() {
  return "round,gamma_k,train_loss,test_loss,test_accuracy,uplink_bits_cum,lyapunov,kkt_rv,kkt_rx";
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_metrics_row(const MetricsRow& r) {
  std::string s;
  s += std::to_string(r.round);
  s += ',';
  s += format_double(r.gamma);
  s += ',';
  s += format_double(r.train_loss);
  s += ',';
  s += format_double(r.test_loss);
  s += ',';
  s += format_double(r.test_accuracy);
  s += ',';
  s += std::to_string(r.uplink_bits_cum);
  s += ',';
  s += format_double(r.lyapunov);
  s += ',';
  s += format_double(r.kkt_rv);
  s += ',';
  s += format_double(r.kkt_rx);
  return s;
}

}  // namespace fpdfp

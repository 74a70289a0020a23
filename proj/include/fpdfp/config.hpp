#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fpdfp/fedsim.hpp"
#include "fpdfp/losses.hpp"
#include "fpdfp/prox.hpp"

namespace fpdfp {

// Bad flags, bad config files, inconsistent experiment descriptions.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OperatorKind { identity, graph_stack };

/* One experiment, as read from a flat key = value file with [section]
 * headers and '#' comments. Unknown keys are rejected by name. The schema is
 * documented in the README; serialize_config emits the canonical form and
 * parse(serialize(c)) == c.
 */
struct ExperimentConfig {
  // [data]
  std::string train_path;
  std::string test_path;
  std::size_t split_train = 0;  // nonzero: carve train/test out of train_path
  std::size_t split_test = 0;
  std::size_t features = 0;  // dimension hint for sparse files

  // [model]
  LossKind loss = LossKind::logistic;
  double mu1 = 0.0;
  double mu2 = 0.0;
  RegKind regularizer = RegKind::l1;
  std::size_t group_size = 0;
  OperatorKind op = OperatorKind::identity;
  double graph_threshold = 0.7;
  std::string graph_path;
  bool unnormalized = false;

  // [federation]
  std::size_t clients = 1;
  std::size_t participating = 1;
  std::size_t batch = 0;
  std::size_t rounds = 1;
  std::size_t tau = 1;
  std::uint32_t s = 0;  // 0 = quantization off
  std::size_t block_size = 0;
  double lambda = 0.0;  // 0 = auto (1 / rho_max(B B^T))
  Algorithm algorithm = Algorithm::fpdfp;
  StepSchedule::Kind schedule = StepSchedule::Kind::constant;
  double gamma = 0.0;  // 0 = auto (inverse Lipschitz estimate)
  double d1 = 0.0;     // decreasing schedule slope

  // [run]
  std::uint64_t seed = 0;
  std::string out;
  std::string reference;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    // stoull would wrap "-3" around instead of rejecting it
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    std::size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

inline double parse_f64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in, const std::string& name) {
  ExperimentConfig cfg;
  std::string section;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(name + ":" + std::to_string(lineno) + ": malformed section header");
      section = line.substr(1, line.size() - 2);
      if (section != "data" && section != "model" && section != "federation" && section != "run")
        throw ConfigError(name + ":" + std::to_string(lineno) + ": unknown section [" + section +
                          "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(name + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = section + "." + detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));
    if (val.empty())
      throw ConfigError(name + ":" + std::to_string(lineno) + ": empty value for " + key);

    if (key == "data.train") cfg.train_path = val;
    else if (key == "data.test") cfg.test_path = val;
    else if (key == "data.split_train") cfg.split_train = detail::parse_u64(key, val);
    else if (key == "data.split_test") cfg.split_test = detail::parse_u64(key, val);
    else if (key == "data.features") cfg.features = detail::parse_u64(key, val);
    else if (key == "model.loss") {
      if (val == "logistic") cfg.loss = LossKind::logistic;
      else if (val == "least-squares") cfg.loss = LossKind::least_squares;
      else throw ConfigError(key + ": unknown loss '" + val + "'");
    } else if (key == "model.mu1") cfg.mu1 = detail::parse_f64(key, val);
    else if (key == "model.mu2") cfg.mu2 = detail::parse_f64(key, val);
    else if (key == "model.regularizer") {
      if (val == "l1") cfg.regularizer = RegKind::l1;
      else if (val == "group-l2") cfg.regularizer = RegKind::group_l2;
      else throw ConfigError(key + ": unknown regularizer '" + val + "'");
    } else if (key == "model.group_size") cfg.group_size = detail::parse_u64(key, val);
    else if (key == "model.operator") {
      if (val == "identity") cfg.op = OperatorKind::identity;
      else if (val == "graph-stack") cfg.op = OperatorKind::graph_stack;
      else throw ConfigError(key + ": unknown operator '" + val + "'");
    } else if (key == "model.graph_threshold") cfg.graph_threshold = detail::parse_f64(key, val);
    else if (key == "model.graph_path") cfg.graph_path = val;
    else if (key == "model.unnormalized") cfg.unnormalized = detail::parse_bool(key, val);
    else if (key == "federation.clients") cfg.clients = detail::parse_u64(key, val);
    else if (key == "federation.participating") cfg.participating = detail::parse_u64(key, val);
    else if (key == "federation.batch") cfg.batch = detail::parse_u64(key, val);
    else if (key == "federation.rounds") cfg.rounds = detail::parse_u64(key, val);
    else if (key == "federation.tau") cfg.tau = detail::parse_u64(key, val);
    else if (key == "federation.s") {
      if (val == "off") cfg.s = 0;
      else {
        const auto s = detail::parse_u64(key, val);
        if (s == 0 || s > 0xffffffffULL)
          throw ConfigError(key + ": expected 'off' or a positive 32-bit level count");
        cfg.s = static_cast<std::uint32_t>(s);
      }
    } else if (key == "federation.block_size") cfg.block_size = detail::parse_u64(key, val);
    else if (key == "federation.lambda") {
      if (val == "auto") cfg.lambda = 0.0;
      else {
        cfg.lambda = detail::parse_f64(key, val);
        if (cfg.lambda <= 0.0) throw ConfigError(key + ": must be positive or 'auto'");
      }
    } else if (key == "federation.algorithm") {
      if (val == "fpdfp") cfg.algorithm = Algorithm::fpdfp;
      else if (val == "fpdfp-identity") cfg.algorithm = Algorithm::fpdfp_identity;
      else if (val == "fedavg") cfg.algorithm = Algorithm::fedavg;
      else if (val == "fedpaq") cfg.algorithm = Algorithm::fedpaq;
      else throw ConfigError(key + ": unknown algorithm '" + val + "'");
    } else if (key == "federation.schedule") {
      if (val == "constant") cfg.schedule = StepSchedule::Kind::constant;
      else if (val == "decreasing") cfg.schedule = StepSchedule::Kind::decreasing;
      else throw ConfigError(key + ": unknown schedule '" + val + "'");
    } else if (key == "federation.gamma") {
      if (val == "auto") cfg.gamma = 0.0;
      else {
        cfg.gamma = detail::parse_f64(key, val);
        if (cfg.gamma <= 0.0) throw ConfigError(key + ": must be positive or 'auto'");
      }
    } else if (key == "federation.d1") {
      cfg.d1 = detail::parse_f64(key, val);
      if (cfg.d1 <= 0.0) throw ConfigError(key + ": must be positive");
    } else if (key == "run.seed") cfg.seed = detail::parse_u64(key, val);
    else if (key == "run.out") cfg.out = val;
    else if (key == "run.reference") cfg.reference = val;
    else throw ConfigError(name + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  return parse_config(in, path);
}

inline std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "[data]\n";
  if (!c.train_path.empty()) o << "train = " << c.train_path << "\n";
  if (!c.test_path.empty()) o << "test = " << c.test_path << "\n";
  if (c.split_train) o << "split_train = " << c.split_train << "\n";
  if (c.split_test) o << "split_test = " << c.split_test << "\n";
  if (c.features) o << "features = " << c.features << "\n";
  o << "\n[model]\n";
  o << "loss = " << (c.loss == LossKind::logistic ? "logistic" : "least-squares") << "\n";
  o << "mu1 = " << format_double(c.mu1) << "\n";
  o << "mu2 = " << format_double(c.mu2) << "\n";
  o << "regularizer = " << (c.regularizer == RegKind::l1 ? "l1" : "group-l2") << "\n";
  if (c.group_size) o << "group_size = " << c.group_size << "\n";
  o << "operator = " << (c.op == OperatorKind::identity ? "identity" : "graph-stack") << "\n";
  o << "graph_threshold = " << format_double(c.graph_threshold) << "\n";
  if (!c.graph_path.empty()) o << "graph_path = " << c.graph_path << "\n";
  o << "unnormalized = " << (c.unnormalized ? "true" : "false") << "\n";
  o << "\n[federation]\n";
  o << "clients = " << c.clients << "\n";
  o << "participating = " << c.participating << "\n";
  o << "batch = " << c.batch << "\n";
  o << "rounds = " << c.rounds << "\n";
  o << "tau = " << c.tau << "\n";
  if (c.s == 0) o << "s = off\n";
  else o << "s = " << c.s << "\n";
  if (c.block_size) o << "block_size = " << c.block_size << "\n";
  if (c.lambda > 0.0) o << "lambda = " << format_double(c.lambda) << "\n";
  else o << "lambda = auto\n";
  switch (c.algorithm) {
    case Algorithm::fpdfp: o << "algorithm = fpdfp\n"; break;
    case Algorithm::fpdfp_identity: o << "algorithm = fpdfp-identity\n"; break;
    case Algorithm::fedavg: o << "algorithm = fedavg\n"; break;
    case Algorithm::fedpaq: o << "algorithm = fedpaq\n"; break;
  }
  o << "schedule = "
    << (c.schedule == StepSchedule::Kind::constant ? "constant" : "decreasing") << "\n";
  if (c.gamma > 0.0) o << "gamma = " << format_double(c.gamma) << "\n";
  else o << "gamma = auto\n";
  if (c.d1 > 0.0) o << "d1 = " << format_double(c.d1) << "\n";
  o << "\n[run]\n";
  o << "seed = " << c.seed << "\n";
  if (!c.out.empty()) o << "out = " << c.out << "\n";
  if (!c.reference.empty()) o << "reference = " << c.reference << "\n";
  return o.str();
}

}  // namespace fpdfp

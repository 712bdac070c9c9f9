#pragma once

// JSON form of WorkbenchConfig. Parsing overlays the user document on the defaults, rejects unknown
// keys and reports every failure with its dotted field path.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pflock/coopt.hpp"
#include "pflock/error.hpp"

namespace pflock {

using Json = nlohmann::ordered_json;

namespace detail {

// Non-finite doubles are spelled as the strings "inf" and "-inf".
inline Json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline double get_double(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path, "expected a number");
}

inline std::size_t get_count(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::size_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::size_t>(j.get<std::int64_t>());
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d >= 0.0 && d == std::floor(d) && d < 1e15) return static_cast<std::size_t>(d);
  }
  throw ConfigError(path, "expected a non-negative integer");
}

inline std::uint64_t get_seed(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ConfigError(path, "expected a non-negative integer seed");
}

inline TrajectoryKind get_kind(const Json& j, const std::string& path) {
  if (j.is_string())
    if (auto k = parse_trajectory_kind(j.get<std::string>())) return *k;
  throw ConfigError(path, "expected one of line, sine, chevron");
}

template <std::size_t N>
std::array<double, N> get_array(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != N) throw ConfigError(path, "expected an array of " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t k = 0; k < N; ++k) out[k] = get_double(j[k], path + "[" + std::to_string(k) + "]");
  return out;
}

inline const Json& field(const Json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(join(path, key), "missing");
  return obj.at(key);
}

// Overlays `user` onto `base`. Keys absent from `base` are rejected; objects merge recursively except
// at `replace_paths`, whose children are taken from `user` wholesale (still checked against `base`).
inline void overlay(Json& base, const Json& user, const std::string& path, const std::vector<std::string>& replace_paths) {
  if (!user.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  const bool replace = std::find(replace_paths.begin(), replace_paths.end(), path) != replace_paths.end();
  Json result = replace ? Json::object() : base;
  for (const auto& [key, value] : user.items()) {
    const std::string p = join(path, key);
    if (!base.contains(key)) throw ConfigError(p, "unknown key");
    Json child = base.at(key);
    if (child.is_object() && value.is_object()) {
      overlay(child, value, p, replace_paths);
    } else if (child.is_object()) {
      throw ConfigError(p, "expected an object");
    } else {
      child = value;
    }
    result[key] = std::move(child);
  }
  base = std::move(result);
}

inline Json chromosome_json(const Chromosome& c) {
  Json j = Json::object();
  for (std::size_t k = 0; k < kGeneCount; ++k) j[std::string(kGeneNames[k])] = c.genes[k];
  return j;
}

inline Chromosome chromosome_from(const Json& j, const std::string& path) {
  Chromosome c;
  for (std::size_t k = 0; k < kGeneCount; ++k) {
    const std::string name(kGeneNames[k]);
    c.genes[k] = get_double(field(j, name, path), join(path, name));
  }
  return c;
}

inline Json trajectory_json(const ReferenceTrajectory& t) {
  return Json{{"origin", {t.origin.x, t.origin.y, t.origin.z}},
              {"heading", {t.heading_x, t.heading_y}},
              {"amplitude", t.amplitude},
              {"period_length", t.period_length},
              {"altitude", t.altitude}};
}

inline ReferenceTrajectory trajectory_from(TrajectoryKind kind, const Json& j, const std::string& path) {
  ReferenceTrajectory t;
  t.kind = kind;
  const auto o = get_array<3>(field(j, "origin", path), join(path, "origin"));
  t.origin = {o[0], o[1], o[2]};
  const auto h = get_array<2>(field(j, "heading", path), join(path, "heading"));
  t.heading_x = h[0];
  t.heading_y = h[1];
  t.amplitude = get_double(field(j, "amplitude", path), join(path, "amplitude"));
  t.period_length = get_double(field(j, "period_length", path), join(path, "period_length"));
  t.altitude = get_double(field(j, "altitude", path), join(path, "altitude"));
  return t;
}

// Paths whose object is replaced, not merged, when the user supplies it.
inline const std::vector<std::string>& replace_paths() {
  static const std::vector<std::string> paths{"coopt.pretrain.hand_tuned"};
  return paths;
}

}  // namespace detail

// Resolved configuration as JSON, every default filled in. Key order is fixed.
inline Json to_json(const WorkbenchConfig& c) {
  using detail::number;
  Json traj = Json::object();
  for (const auto& [kind, t] : c.trajectories) traj[std::string(to_string(kind))] = detail::trajectory_json(t);

  Json bounds = Json::object();
  for (std::size_t k = 0; k < kGeneCount; ++k)
    bounds[std::string(kGeneNames[k])] = {c.ga.bounds.lower[k], c.ga.bounds.upper[k]};

  Json kinds = Json::array();
  for (auto k : c.coopt.pretrain.trajectories) kinds.push_back(std::string(to_string(k)));
  Json hand = Json::object();
  for (const auto& [kind, chrom] : c.coopt.pretrain.hand_tuned) hand[std::string(to_string(kind))] = detail::chromosome_json(chrom);

  Json b = Json::array();
  for (double w : c.metrics.b) b.push_back(w);

  return Json{
      {"sim",
       {{"n_robots", c.sim.n_robots},
        {"sensing_range", c.sim.sensing_range},
        {"duration", c.sim.duration},
        {"control_rate", c.sim.control_rate},
        {"lookahead", c.sim.lookahead},
        {"v_max", c.sim.v_max},
        {"formation_spacing", c.sim.formation_spacing},
        {"trajectories", traj}}},
      {"metrics", {{"b", b}, {"r_lo", c.metrics.r_lo}, {"r_hi", c.metrics.r_hi}, {"v_min", c.metrics.v_min}}},
      {"ga",
       {{"population_size", c.ga.population_size},
        {"generations", c.ga.generations},
        {"crossover_prob", c.ga.crossover_prob},
        {"mutation_prob", c.ga.mutation_prob},
        {"elitism_count", c.ga.elitism_count},
        {"kappa", number(c.ga.kappa)},
        {"beta", c.ga.beta},
        {"repeats_per_eval", c.ga.repeats_per_eval},
        {"bounds", bounds}}},
      {"nn",
       {{"window_seconds", c.nn.window_seconds},
        {"sample_rate", c.nn.sample_rate},
        {"conv_channels", c.nn.conv_channels},
        {"hidden", c.nn.hidden},
        {"learning_rate", c.nn.learning_rate},
        {"momentum", c.nn.momentum},
        {"batch_size", c.nn.batch_size},
        {"gamma", c.nn.gamma},
        {"bn_epsilon", c.nn.bn_epsilon},
        {"bn_momentum", c.nn.bn_momentum}}},
      {"coopt",
       {{"trajectory", std::string(to_string(c.coopt.trajectory))},
        {"buffer_capacity", c.coopt.buffer_capacity},
        {"online_epochs", c.coopt.online_epochs},
        {"master_seed", c.coopt.master_seed},
        {"pretrain",
         {{"epochs", c.coopt.pretrain.epochs},
          {"sample_count", c.coopt.pretrain.sample_count},
          {"trajectories", kinds},
          {"hand_tuned", hand},
          {"test_fraction", c.coopt.pretrain.test_fraction}}}}},
      {"workers", c.workers}};
}

// Throws ConfigError naming the first field that breaks a module invariant.
inline void validate(const WorkbenchConfig& c) {
  if (auto f = c.sim.validate()) throw ConfigError("sim." + *f, "invalid value");
  for (const auto& [kind, t] : c.trajectories)
    if (auto f = t.validate()) throw ConfigError("sim.trajectories." + std::string(to_string(kind)) + "." + *f, "invalid value");
  for (auto k : kAllTrajectoryKinds)
    if (!c.trajectories.contains(k)) throw ConfigError("sim.trajectories." + std::string(to_string(k)), "missing");
  if (auto f = c.metrics.validate()) throw ConfigError("metrics." + *f, "invalid value");
  if (auto f = c.ga.validate()) throw ConfigError("ga." + *f, "invalid value");
  if (auto f = c.nn.validate()) throw ConfigError("nn." + *f, "invalid value");
  if (c.nn.sample_rate > c.sim.control_rate) throw ConfigError("nn.sample_rate", "exceeds sim.control_rate");
  const auto& co = c.coopt;
  if (co.buffer_capacity < 1) throw ConfigError("coopt.buffer_capacity", "must be at least 1");
  if (co.online_epochs < 1) throw ConfigError("coopt.online_epochs", "must be at least 1");
  const auto& p = co.pretrain;
  if (p.sample_count < 1) throw ConfigError("coopt.pretrain.sample_count", "must be at least 1");
  if (!(p.test_fraction > 0.0 && p.test_fraction < 1.0)) throw ConfigError("coopt.pretrain.test_fraction", "must lie in (0, 1)");
  if (p.trajectories.empty()) throw ConfigError("coopt.pretrain.trajectories", "no trajectory kinds");
  for (auto k : p.trajectories)
    if (!p.hand_tuned.contains(k))
      throw ConfigError("coopt.pretrain.hand_tuned", "missing chromosome for " + std::string(to_string(k)));
  for (const auto& [kind, chrom] : p.hand_tuned)
    for (double g : chrom.genes)
      if (!std::isfinite(g)) throw ConfigError("coopt.pretrain.hand_tuned." + std::string(to_string(kind)), "non-finite gene");
  if (c.workers < 1) throw ConfigError("workers", "must be at least 1");
}

// Builds a config from a fully resolved document (see resolve).
inline WorkbenchConfig from_resolved_json(const Json& j) {
  using namespace detail;
  WorkbenchConfig c;
  const Json& s = field(j, "sim", "");
  c.sim.n_robots = get_count(field(s, "n_robots", "sim"), "sim.n_robots");
  c.sim.sensing_range = get_double(field(s, "sensing_range", "sim"), "sim.sensing_range");
  c.sim.duration = get_double(field(s, "duration", "sim"), "sim.duration");
  c.sim.control_rate = get_double(field(s, "control_rate", "sim"), "sim.control_rate");
  c.sim.lookahead = get_double(field(s, "lookahead", "sim"), "sim.lookahead");
  c.sim.v_max = get_double(field(s, "v_max", "sim"), "sim.v_max");
  c.sim.formation_spacing = get_double(field(s, "formation_spacing", "sim"), "sim.formation_spacing");
  c.trajectories.clear();
  for (const auto& [key, value] : field(s, "trajectories", "sim").items()) {
    const std::string p = "sim.trajectories." + key;
    c.trajectories[get_kind(Json(key), p)] = trajectory_from(get_kind(Json(key), p), value, p);
  }

  const Json& m = field(j, "metrics", "");
  c.metrics.b = get_array<kMetricCount>(field(m, "b", "metrics"), "metrics.b");
  c.metrics.r_lo = get_double(field(m, "r_lo", "metrics"), "metrics.r_lo");
  c.metrics.r_hi = get_double(field(m, "r_hi", "metrics"), "metrics.r_hi");
  c.metrics.v_min = get_double(field(m, "v_min", "metrics"), "metrics.v_min");

  const Json& g = field(j, "ga", "");
  c.ga.population_size = get_count(field(g, "population_size", "ga"), "ga.population_size");
  c.ga.generations = get_count(field(g, "generations", "ga"), "ga.generations");
  c.ga.crossover_prob = get_double(field(g, "crossover_prob", "ga"), "ga.crossover_prob");
  c.ga.mutation_prob = get_double(field(g, "mutation_prob", "ga"), "ga.mutation_prob");
  c.ga.elitism_count = get_count(field(g, "elitism_count", "ga"), "ga.elitism_count");
  c.ga.kappa = get_double(field(g, "kappa", "ga"), "ga.kappa");
  c.ga.beta = get_double(field(g, "beta", "ga"), "ga.beta");
  c.ga.repeats_per_eval = get_count(field(g, "repeats_per_eval", "ga"), "ga.repeats_per_eval");
  const Json& bounds = field(g, "bounds", "ga");
  for (std::size_t k = 0; k < kGeneCount; ++k) {
    const std::string name(kGeneNames[k]);
    const auto lu = get_array<2>(field(bounds, name, "ga.bounds"), "ga.bounds." + name);
    c.ga.bounds.lower[k] = lu[0];
    c.ga.bounds.upper[k] = lu[1];
  }

  const Json& n = field(j, "nn", "");
  c.nn.window_seconds = get_double(field(n, "window_seconds", "nn"), "nn.window_seconds");
  c.nn.sample_rate = get_double(field(n, "sample_rate", "nn"), "nn.sample_rate");
  c.nn.conv_channels = get_count(field(n, "conv_channels", "nn"), "nn.conv_channels");
  c.nn.hidden = get_count(field(n, "hidden", "nn"), "nn.hidden");
  c.nn.learning_rate = get_double(field(n, "learning_rate", "nn"), "nn.learning_rate");
  c.nn.momentum = get_double(field(n, "momentum", "nn"), "nn.momentum");
  c.nn.batch_size = get_count(field(n, "batch_size", "nn"), "nn.batch_size");
  c.nn.gamma = get_double(field(n, "gamma", "nn"), "nn.gamma");
  c.nn.bn_epsilon = get_double(field(n, "bn_epsilon", "nn"), "nn.bn_epsilon");
  c.nn.bn_momentum = get_double(field(n, "bn_momentum", "nn"), "nn.bn_momentum");

  const Json& co = field(j, "coopt", "");
  c.coopt.trajectory = get_kind(field(co, "trajectory", "coopt"), "coopt.trajectory");
  c.coopt.buffer_capacity = get_count(field(co, "buffer_capacity", "coopt"), "coopt.buffer_capacity");
  c.coopt.online_epochs = get_count(field(co, "online_epochs", "coopt"), "coopt.online_epochs");
  c.coopt.master_seed = get_seed(field(co, "master_seed", "coopt"), "coopt.master_seed");
  const Json& p = field(co, "pretrain", "coopt");
  c.coopt.pretrain.epochs = get_count(field(p, "epochs", "coopt.pretrain"), "coopt.pretrain.epochs");
  c.coopt.pretrain.sample_count = get_count(field(p, "sample_count", "coopt.pretrain"), "coopt.pretrain.sample_count");
  c.coopt.pretrain.test_fraction = get_double(field(p, "test_fraction", "coopt.pretrain"), "coopt.pretrain.test_fraction");
  const Json& kinds = field(p, "trajectories", "coopt.pretrain");
  if (!kinds.is_array()) throw ConfigError("coopt.pretrain.trajectories", "expected an array of trajectory kinds");
  c.coopt.pretrain.trajectories.clear();
  for (std::size_t k = 0; k < kinds.size(); ++k)
    c.coopt.pretrain.trajectories.push_back(get_kind(kinds[k], "coopt.pretrain.trajectories[" + std::to_string(k) + "]"));
  c.coopt.pretrain.hand_tuned.clear();
  for (const auto& [key, value] : field(p, "hand_tuned", "coopt.pretrain").items()) {
    const std::string path = "coopt.pretrain.hand_tuned." + key;
    c.coopt.pretrain.hand_tuned[get_kind(Json(key), path)] = chromosome_from(value, path);
  }

  c.workers = get_count(field(j, "workers", ""), "workers");
  return c;
}

// Parses an override value: JSON when it parses as JSON, otherwise a bare string.
inline Json parse_override_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

// Sets a dotted key path in a resolved document; the path must already exist.
inline void apply_override(Json& doc, const std::string& path, const Json& value) {
  Json* node = &doc;
  std::string walked;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    walked = detail::join(walked, key);
    if (key.empty() || !node->is_object() || !node->contains(key)) throw ConfigError(walked, "unknown key");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object() && !value.is_object()) throw ConfigError(path, "expected an object");
  *node = value;
}

using Overrides = std::vector<std::pair<std::string, std::string>>;

// defaults <- user document <- overrides, then parse and validate.
inline WorkbenchConfig resolve(const Json& user, const Overrides& overrides = {}) {
  Json doc = to_json(WorkbenchConfig{});
  if (!user.is_null()) detail::overlay(doc, user, "", detail::replace_paths());
  for (const auto& [path, text] : overrides) apply_override(doc, path, parse_override_value(text));
  WorkbenchConfig c = from_resolved_json(doc);
  validate(c);
  return c;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config", "cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config", std::string("malformed JSON in ") + path + ": " + e.what());
  }
}

inline WorkbenchConfig load_config(const std::string& path, const Overrides& overrides = {}) {
  return resolve(path.empty() ? Json() : read_json_file(path), overrides);
}

// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Digest of the resolved config's canonical dump, as 16 hex digits.
inline std::string config_digest(const WorkbenchConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace pflock

#pragma once

// Co-optimization driver and its on-disk run archive.
//
//   <archive>/run.json                 resolved config, master seed, digest
//   <archive>/manifest.json            written atomically when the run completes
//   <archive>/gen_<k>/population.csv   population after generation k (k = 0 is the initial one)
//   <archive>/gen_<k>/offspring.csv    the M experiments evaluated in generation k
//   <archive>/gen_<k>/metrics.csv      metric vector per experiment
//   <archive>/gen_<k>/buffer.csv       replay buffer contents after generation k
//   <archive>/gen_<k>/discriminator.ckpt, optimizer.ckpt
//   <archive>/gen_<k>/traces/exp_<id>.csv
//   <archive>/gen_<k>/summary.json     written last; marks generation k complete
//
// Every random stream is derived from the master seed and the generation index, so a run resumed
// from generation k continues bit-identically.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pflock/config.hpp"
#include "pflock/coopt.hpp"
#include "pflock/nn/checkpoint.hpp"

namespace pflock {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "1.0.0";

// %.17g, with "inf" / "-inf" / "nan" for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("not a number: " + s);
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Writes via a temporary sibling and rename, so readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& contents) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << contents;
    if (!os) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline fs::path generation_dir(const fs::path& archive, std::size_t g) { return archive / ("gen_" + std::to_string(g)); }

// ---------------------------------------------------------------------------------------------
// Generation log

struct LogRow {
  std::size_t generation{0};
  std::size_t experiment_id{0};
  Chromosome chromosome;
  double f_loss{0.0};
  double p_loss{0.0};
  double upsilon{0.0};
  bool elite{false};
};

inline std::string log_header() {
  std::string h = "generation,experiment_id";
  for (auto name : kGeneNames) h += "," + std::string(name);
  return h + ",f_loss,p_loss,upsilon,elite";
}

inline std::string log_csv(std::size_t generation, const std::vector<Individual>& rows, const std::vector<bool>& elite) {
  std::string out = log_header() + "\n";
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const auto& r = rows[j];
    out += std::to_string(generation) + "," + std::to_string(r.experiment_id);
    for (double g : r.chromosome.genes) out += "," + format_double(g);
    out += "," + format_double(r.f_loss) + "," + format_double(r.p_loss) + "," + format_double(r.upsilon) + "," +
           (elite[j] ? "1" : "0") + "\n";
  }
  return out;
}

inline std::vector<LogRow> read_log_csv(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line) || line != log_header()) throw std::runtime_error("unexpected header in " + path.string());
  std::vector<LogRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2 + kGeneCount + 4) throw std::runtime_error("malformed row in " + path.string());
    LogRow r;
    r.generation = std::stoull(cells[0]);
    r.experiment_id = std::stoull(cells[1]);
    for (std::size_t k = 0; k < kGeneCount; ++k) r.chromosome.genes[k] = parse_double(cells[2 + k]);
    r.f_loss = parse_double(cells[2 + kGeneCount]);
    r.p_loss = parse_double(cells[3 + kGeneCount]);
    r.upsilon = parse_double(cells[4 + kGeneCount]);
    r.elite = cells[5 + kGeneCount] == "1";
    rows.push_back(r);
  }
  return rows;
}

struct MetricsRow {
  std::size_t experiment_id{0};
  MetricsVector metrics;
  double f_loss{0.0};
  double p_loss{0.0};
  std::size_t windows{0};
  std::string error;
};

inline std::string metrics_header() {
  std::string h = "experiment_id";
  for (auto name : kMetricNames) h += "," + std::string(name);
  return h + ",f_loss,p_loss,windows,error";
}

inline std::vector<MetricsRow> read_metrics_csv(const fs::path& path) {
  std::istringstream is(read_file(path));
  std::string line;
  if (!std::getline(is, line) || line != metrics_header()) throw std::runtime_error("unexpected header in " + path.string());
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 1 + kMetricCount + 4) throw std::runtime_error("malformed row in " + path.string());
    MetricsRow r;
    r.experiment_id = std::stoull(cells[0]);
    for (std::size_t k = 0; k < kMetricCount; ++k) r.metrics.m[k] = parse_double(cells[1 + k]);
    r.f_loss = parse_double(cells[1 + kMetricCount]);
    r.p_loss = parse_double(cells[2 + kMetricCount]);
    r.windows = std::stoull(cells[3 + kMetricCount]);
    r.error = cells[4 + kMetricCount];
    rows.push_back(r);
  }
  return rows;
}

// Generations whose summary.json exists, ascending and contiguous from 0.
inline std::vector<std::size_t> completed_generations(const fs::path& archive) {
  std::vector<std::size_t> out;
  for (std::size_t g = 0; fs::exists(generation_dir(archive, g) / "summary.json"); ++g) out.push_back(g);
  return out;
}

// ---------------------------------------------------------------------------------------------
// Driver

struct GenerationRecord {
  std::size_t generation{0};
  Population population;
  std::vector<Individual> offspring;
  bool trained{false};
  std::string skip_reason;
  double epoch_loss{0.0};
  double train_accuracy{0.0};
  double mean_p_loss{0.0};
  double median_population_f_loss{0.0};
  std::size_t buffer_entries{0};
  std::size_t buffer_windows{0};
};

struct RunArchive {
  fs::path root;
  std::vector<GenerationRecord> generations;  // the ones produced by this invocation
  nn::Discriminator net;
};

struct RunOptions {
  fs::path archive;
  std::optional<std::string> checkpoint;  // pre-trained discriminator
  bool fresh_discriminator{false};
  bool resume{false};
  bool write_traces{true};
  std::string command_line;
  std::function<void(const GenerationRecord&)> on_generation;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline Json run_json(const WorkbenchConfig& cfg) {
  return Json{{"config", to_json(cfg)}, {"master_seed", cfg.coopt.master_seed}, {"digest", config_digest(cfg)}};
}

namespace detail {

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::vector<bool> elite_flags(const std::vector<Individual>& rows, const Population& population, std::size_t elites) {
  std::vector<bool> flags(rows.size(), false);
  for (std::size_t j = 0; j < rows.size(); ++j)
    for (std::size_t e = 0; e < std::min(elites, population.size()); ++e)
      if (population[e].experiment_id == rows[j].experiment_id) flags[j] = true;
  return flags;
}

inline std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

inline std::string checkpoint_bytes(const nn::Discriminator& net) {
  std::ostringstream os(std::ios::binary);
  nn::save_weights(os, net);
  return os.str();
}

inline std::string optimizer_bytes(const nn::OptimizerState& opt) {
  std::ostringstream os(std::ios::binary);
  nn::save_optimizer(os, opt);
  return os.str();
}

inline void write_generation(const fs::path& dir, const WorkbenchConfig& cfg, const GenerationRecord& rec,
                             const std::vector<ExperimentResult>& results, const ReplayBuffer& buffer,
                             const nn::Discriminator& net, const nn::OptimizerState& opt, bool write_traces) {
  fs::create_directories(dir);
  const std::size_t elites = cfg.ga.elitism_count;
  std::vector<Individual> pop(rec.population.begin(), rec.population.end());
  write_file_atomic(dir / "population.csv", log_csv(rec.generation, pop, elite_flags(pop, rec.population, elites)));
  write_file_atomic(dir / "offspring.csv",
                    log_csv(rec.generation, rec.offspring, elite_flags(rec.offspring, rec.population, elites)));

  std::string metrics = metrics_header() + "\n";
  for (std::size_t j = 0; j < rec.offspring.size(); ++j) {
    const auto& r = results[j];
    metrics += std::to_string(rec.offspring[j].experiment_id);
    for (double v : r.metrics.m) metrics += "," + format_double(v);
    metrics += "," + format_double(r.f_loss) + "," + format_double(r.p_loss) + "," + std::to_string(r.windows.size()) +
               "," + sanitize(r.error) + "\n";
  }
  write_file_atomic(dir / "metrics.csv", metrics);

  std::string buf = "experiment_id,generation,f_loss,windows\n";
  for (const auto& e : buffer.entries())
    buf += std::to_string(e.experiment_id) + "," + std::to_string(e.generation) + "," + format_double(e.f_loss) + "," +
           std::to_string(e.windows.size()) + "\n";
  write_file_atomic(dir / "buffer.csv", buf);

  write_file_atomic(dir / "discriminator.ckpt", checkpoint_bytes(net));
  write_file_atomic(dir / "optimizer.ckpt", optimizer_bytes(opt));

  if (write_traces) {
    fs::create_directories(dir / "traces");
    for (std::size_t j = 0; j < rec.offspring.size(); ++j) {
      if (!results[j].trace) continue;
      std::ostringstream os;
      write_trace_csv(os, *results[j].trace);
      write_file_atomic(dir / "traces" / ("exp_" + std::to_string(rec.offspring[j].experiment_id) + ".csv"), os.str());
    }
  }

  const Individual& best = rec.population.front();
  Json summary{{"generation", rec.generation},
               {"trained", rec.trained},
               {"skip_reason", rec.skip_reason},
               {"epoch_loss", number(rec.epoch_loss)},
               {"train_accuracy", number(rec.train_accuracy)},
               {"mean_p_loss", number(rec.mean_p_loss)},
               {"median_population_f_loss", number(rec.median_population_f_loss)},
               {"best_upsilon", number(best.upsilon)},
               {"best_experiment_id", best.experiment_id},
               {"buffer_entries", rec.buffer_entries},
               {"buffer_windows", rec.buffer_windows}};
  write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

inline Population population_from_log(const std::vector<LogRow>& rows, std::size_t m) {
  Population pop;
  for (const auto& r : rows) {
    Individual ind;
    ind.chromosome = r.chromosome;
    ind.f_loss = r.f_loss;
    ind.p_loss = r.p_loss;
    ind.upsilon = r.upsilon;
    ind.experiment_id = r.experiment_id;
    ind.generation = r.experiment_id / m;
    pop.push_back(ind);
  }
  return pop;
}

// Re-simulates the experiments listed in gen_<g>/buffer.csv to recover their windows.
inline ReplayBuffer rebuild_buffer(const fs::path& archive, std::size_t g, const WorkbenchConfig& cfg,
                                   const nn::Discriminator& net) {
  ReplayBuffer buffer(cfg.coopt.buffer_capacity, cfg.ga.kappa);
  std::istringstream is(read_file(generation_dir(archive, g) / "buffer.csv"));
  std::string line;
  std::getline(is, line);
  const std::size_t m = cfg.ga.population_size;
  std::map<std::size_t, std::vector<LogRow>> logs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::size_t id = std::stoull(cells[0]);
    const std::size_t born = std::stoull(cells[1]);
    if (!logs.contains(born)) logs[born] = read_log_csv(generation_dir(archive, born) / "offspring.csv");
    const auto& rows = logs[born];
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const LogRow& r) { return r.experiment_id == id; });
    if (it == rows.end() || id / m != born) throw std::runtime_error("buffer entry " + std::to_string(id) + " not in archive");
    const Chromosome c = it->chromosome;
    auto res = evaluate_experiments(std::span<const Chromosome>(&c, 1), id, cfg, net);
    ReplayBuffer::Entry e;
    e.windows = std::move(res[0].windows);
    e.label = e.windows.empty() ? 0 : e.windows.front().label;
    e.f_loss = parse_double(cells[2]);
    e.generation = born;
    e.experiment_id = id;
    buffer.push(std::move(e));
  }
  return buffer;
}

}  // namespace detail

// Runs (or resumes) the alternating loop: evaluate the generation's experiments against the frozen
// discriminator, update the GA population, feed qualifying experiments to the replay buffer, then
// train the discriminator on the buffer. Generation 0 evaluates the random initial population.
inline RunArchive run_cooptimization(const WorkbenchConfig& cfg, const RunOptions& options) {
  validate(cfg);
  const fs::path& root = options.archive;
  if (root.empty()) throw ConfigError("archive", "no archive directory given");
  fs::create_directories(root);
  const std::uint64_t master = cfg.coopt.master_seed;
  const std::size_t m = cfg.ga.population_size;
  const auto started = detail::utc_now();

  const Json run = run_json(cfg);
  std::vector<std::size_t> done;
  if (options.resume && fs::exists(root / "run.json")) {
    const Json previous = Json::parse(read_file(root / "run.json"));
    if (previous.value("digest", "") != run["digest"])
      throw ConfigError("resume", "resolved config differs from the archived run.json");
    done = completed_generations(root);
  } else if (fs::exists(generation_dir(root, 0))) {
    throw ConfigError("archive", root.string() + " already holds a run; pass --resume or choose a new directory");
  }
  write_file_atomic(root / "run.json", run.dump(2) + "\n");

  RunArchive archive;
  archive.root = root;
  nn::OptimizerState opt = cfg.fresh_optimizer();
  std::optional<ReplayBuffer> buffer;
  Population population;
  std::size_t start = 0;

  if (!done.empty()) {
    const std::size_t last = done.back();
    const fs::path dir = generation_dir(root, last);
    archive.net = nn::load_weights((dir / "discriminator.ckpt").string(), cfg.architecture());
    std::istringstream os(read_file(dir / "optimizer.ckpt"), std::ios::binary);
    opt = nn::load_optimizer(os, cfg.architecture());
    population = detail::population_from_log(read_log_csv(dir / "population.csv"), m);
    // Buffered windows are re-simulated; the scoring net is irrelevant to them.
    buffer = detail::rebuild_buffer(root, last, cfg, archive.net);
    start = last + 1;
  } else {
    if (options.checkpoint) {
      if (!fs::exists(*options.checkpoint)) throw ConfigError("checkpoint", "no such file: " + *options.checkpoint);
      archive.net = nn::load_weights(*options.checkpoint, cfg.architecture());
    } else if (options.fresh_discriminator) {
      archive.net = cfg.fresh_discriminator(derive_seed(master, {stream::kInit}));
    } else {
      throw ConfigError("checkpoint", "a pre-trained checkpoint or --fresh-discriminator is required");
    }
    buffer.emplace(cfg.coopt.buffer_capacity, cfg.ga.kappa);
  }
  // A partially written generation is recomputed from scratch.
  if (fs::exists(generation_dir(root, start))) fs::remove_all(generation_dir(root, start));

  for (std::size_t g = start; g <= cfg.ga.generations; ++g) {
    Rng rng(derive_seed(master, {stream::kGa, g}));
    std::vector<ExperimentResult> results;
    auto evaluator = [&](std::span<const Chromosome> chromosomes, std::size_t first_id) {
      results = evaluate_experiments(chromosomes, first_id, cfg, archive.net);
      std::vector<Evaluation> evals;
      for (const auto& r : results) evals.push_back({r.f_loss, r.p_loss, r.error});
      return evals;
    };

    GenerationRecord rec;
    rec.generation = g;
    if (g == 0) {
      population = initial_population(evaluator, cfg.ga, rng);
      rec.offspring = population;
      std::sort(rec.offspring.begin(), rec.offspring.end(),
                [](const Individual& a, const Individual& b) { return a.experiment_id < b.experiment_id; });
    } else {
      auto step = evolve_generation(population, evaluator, cfg.ga, rng, g, g * m);
      population = std::move(step.population);
      rec.offspring = std::move(step.offspring);
    }
    rec.population = population;

    double p_sum = 0.0;
    for (std::size_t j = 0; j < rec.offspring.size(); ++j) {
      p_sum += rec.offspring[j].p_loss;
      auto& r = results[j];
      if (r.windows.empty()) continue;
      ReplayBuffer::Entry e;
      e.label = r.windows.front().label;
      e.windows = r.windows;
      e.f_loss = r.f_loss;
      e.generation = g;
      e.experiment_id = rec.offspring[j].experiment_id;
      buffer->push(std::move(e));
    }
    rec.mean_p_loss = p_sum / static_cast<double>(rec.offspring.size());
    std::vector<double> f;
    for (const auto& ind : population) f.push_back(ind.f_loss);
    rec.median_population_f_loss = median(f);

    if (buffer->empty()) {
      rec.skip_reason = "replay buffer empty";
    } else {
      const auto windows = buffer->windows();
      for (std::size_t e = 0; e < cfg.coopt.online_epochs; ++e) {
        Rng train_rng(derive_seed(master, {stream::kTraining, g, e}));
        rec.epoch_loss = nn::train_epoch(archive.net, windows, opt, cfg.nn.batch_size, train_rng).mean_loss;
      }
      rec.trained = true;
      rec.train_accuracy = nn::accuracy(archive.net, windows);
    }
    rec.buffer_entries = buffer->size();
    rec.buffer_windows = 0;
    for (const auto& e : buffer->entries()) rec.buffer_windows += e.windows.size();

    detail::write_generation(generation_dir(root, g), cfg, rec, results, *buffer, archive.net, opt, options.write_traces);
    if (options.on_generation) options.on_generation(rec);
    archive.generations.push_back(std::move(rec));
  }

  Json manifest{{"tool_version", kToolVersion},
                {"config_digest", config_digest(cfg)},
                {"master_seed", master},
                {"command_line", options.command_line},
                {"started", started},
                {"finished", detail::utc_now()},
                {"generations_completed", completed_generations(root).size()}};
  write_file_atomic(root / "manifest.json", manifest.dump(2) + "\n");
  return archive;
}

// Loads run.json back into a config.
inline WorkbenchConfig archived_config(const fs::path& archive) {
  if (!fs::exists(archive / "run.json")) throw ConfigError("archive", "missing " + (archive / "run.json").string());
  const Json run = Json::parse(read_file(archive / "run.json"));
  WorkbenchConfig c = from_resolved_json(run.at("config"));
  validate(c);
  return c;
}

}  // namespace pflock

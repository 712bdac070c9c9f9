#pragma once

// Command-line front end: pretrain, cooptimize, evaluate, export.
// Exit status: 0 success, 1 runtime failure, 2 configuration or validation failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pflock/archive.hpp"
#include "pflock/config.hpp"
#include "pflock/coopt.hpp"
#include "pflock/nn/checkpoint.hpp"

namespace pflock::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string archive;
  Overrides overrides;
  std::string command_line;
};

namespace detail {

// Resolves the config from --config (or an archived run.json) plus dotted and global overrides.
inline WorkbenchConfig resolve_config(const GlobalOptions& g, Overrides extra, const std::optional<fs::path>& archived = {}) {
  Overrides all = std::move(extra);
  all.insert(all.end(), g.overrides.begin(), g.overrides.end());
  if (g.seed) all.emplace_back("coopt.master_seed", std::to_string(*g.seed));
  if (g.workers) all.emplace_back("workers", std::to_string(*g.workers));
  if (archived && g.config.empty()) {
    WorkbenchConfig base = archived_config(*archived);
    Json doc = to_json(base);
    for (const auto& [path, text] : all) apply_override(doc, path, parse_override_value(text));
    WorkbenchConfig c = from_resolved_json(doc);
    validate(c);
    return c;
  }
  return load_config(g.config, all);
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

inline std::optional<std::size_t> last_generation(const fs::path& archive) {
  const auto done = completed_generations(archive);
  if (done.empty()) return std::nullopt;
  return done.back();
}

struct Champion {
  std::size_t generation{0};
  LogRow row;
};

inline std::optional<Champion> champion(const fs::path& archive) {
  const auto last = last_generation(archive);
  if (!last) return std::nullopt;
  const auto rows = read_log_csv(generation_dir(archive, *last) / "population.csv");
  if (rows.empty()) return std::nullopt;
  return Champion{*last, rows.front()};
}

inline nn::Discriminator load_checkpoint(const std::string& path, const nn::Architecture& arch) {
  if (!fs::exists(path)) throw ConfigError("checkpoint", "no such file: " + path);
  return nn::load_weights(path, arch);
}

inline std::vector<TrajectoryKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<TrajectoryKind> out;
  for (const auto& n : names) {
    const auto k = parse_trajectory_kind(n);
    if (!k) throw ConfigError("kinds", "unknown trajectory kind " + n);
    out.push_back(*k);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------

struct PretrainOptions {
  std::string out;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> epochs;
};

inline int cmd_pretrain(const GlobalOptions& g, const PretrainOptions& o, std::ostream& out, std::ostream& err) {
  Overrides extra;
  if (o.samples) extra.emplace_back("coopt.pretrain.sample_count", std::to_string(*o.samples));
  if (o.epochs) extra.emplace_back("coopt.pretrain.epochs", std::to_string(*o.epochs));
  const WorkbenchConfig cfg = detail::resolve_config(g, extra);
  fs::path ckpt = o.out.empty() ? (g.archive.empty() ? fs::path("pretrained.ckpt") : fs::path(g.archive) / "pretrained.ckpt")
                                : fs::path(o.out);
  const fs::path dir = ckpt.has_parent_path() ? ckpt.parent_path() : fs::path(".");
  fs::create_directories(dir);
  detail::write_text(dir / "pretrain_config.json", to_json(cfg).dump(2) + "\n");

  const std::uint64_t seed = cfg.coopt.master_seed;
  auto net = cfg.fresh_discriminator(derive_seed(seed, {stream::kInit}));
  auto opt = cfg.fresh_optimizer();
  err << "pretrain: " << cfg.coopt.pretrain.sample_count << " experiments, " << cfg.coopt.pretrain.epochs << " epochs\n";
  const auto r = pretrain(net, opt, cfg, seed);
  nn::save_weights(ckpt.string(), net);

  std::ostringstream report;
  report << "train_accuracy,test_accuracy,train_windows,test_windows,epochs,sample_count,final_loss\n"
         << format_double(r.train_accuracy) << "," << format_double(r.test_accuracy) << "," << r.train_windows << ","
         << r.test_windows << "," << cfg.coopt.pretrain.epochs << "," << cfg.coopt.pretrain.sample_count << ","
         << format_double(r.epoch_losses.empty() ? std::numeric_limits<double>::quiet_NaN() : r.epoch_losses.back())
         << "\n";
  detail::write_text(dir / "pretrain_report.csv", report.str());
  std::ostringstream losses;
  losses << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < r.epoch_losses.size(); ++e) losses << e + 1 << "," << format_double(r.epoch_losses[e]) << "\n";
  detail::write_text(dir / "pretrain_losses.csv", losses.str());
  out << "checkpoint " << ckpt.string() << "\ntrain_accuracy " << r.train_accuracy << "\ntest_accuracy "
      << r.test_accuracy << "\n";
  return kExitOk;
}

struct CooptimizeOptions {
  std::string checkpoint;
  bool fresh_discriminator{false};
  bool resume{false};
  bool no_traces{false};
  std::optional<std::size_t> generations;
  std::optional<std::size_t> population;
  std::optional<double> duration;
};

inline int cmd_cooptimize(const GlobalOptions& g, const CooptimizeOptions& o, std::ostream& out, std::ostream& err) {
  if (g.archive.empty()) throw ConfigError("archive", "--archive is required");
  Overrides extra;
  if (o.generations) extra.emplace_back("ga.generations", std::to_string(*o.generations));
  if (o.population) extra.emplace_back("ga.population_size", std::to_string(*o.population));
  if (o.duration) extra.emplace_back("sim.duration", format_double(*o.duration));
  const WorkbenchConfig cfg = detail::resolve_config(g, extra);
  if (o.checkpoint.empty() && !o.fresh_discriminator && !o.resume)
    throw ConfigError("checkpoint", "pass --checkpoint or --fresh-discriminator");

  RunOptions run;
  run.archive = g.archive;
  if (!o.checkpoint.empty()) run.checkpoint = o.checkpoint;
  run.fresh_discriminator = o.fresh_discriminator || (o.resume && o.checkpoint.empty());
  run.resume = o.resume;
  run.write_traces = !o.no_traces;
  run.command_line = g.command_line;
  run.on_generation = [&err](const GenerationRecord& r) {
    err << "generation " << r.generation << ": best upsilon " << r.population.front().upsilon << ", median f_loss "
        << r.median_population_f_loss << ", buffer " << r.buffer_entries
        << (r.trained ? ", trained" : ", training skipped (" + r.skip_reason + ")") << "\n";
  };
  const auto archive = run_cooptimization(cfg, run);
  out << "archive " << archive.root.string() << "\ngenerations " << completed_generations(archive.root).size() << "\n";
  return kExitOk;
}

struct EvaluateOptions {
  std::string mode;
  std::vector<std::string> checkpoints;
  std::vector<std::string> kinds;
  std::vector<double> variances{0.25, 1.0, 4.0};
  std::size_t experiments{10};
  std::optional<std::size_t> experiment;
  std::optional<std::string> kind;
  bool hand_tuned{false};
  std::string out;
};

inline int cmd_evaluate(const GlobalOptions& g, const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
  const std::optional<fs::path> archive = g.archive.empty() ? std::nullopt : std::optional<fs::path>(g.archive);
  const WorkbenchConfig cfg = detail::resolve_config(g, {}, archive);
  const fs::path out_dir = o.out.empty() ? (archive ? *archive : fs::path(".")) : fs::path(o.out);
  fs::create_directories(out_dir);
  const auto champ = archive ? detail::champion(*archive) : std::nullopt;
  const bool use_hand_tuned = o.hand_tuned || !champ;
  const std::uint64_t seed = derive_seed(cfg.coopt.master_seed, {stream::kEvaluation});

  std::vector<std::string> ckpts = o.checkpoints;
  if (ckpts.empty() && o.mode != "replay") {
    if (!archive) throw ConfigError("checkpoint", "pass --checkpoint or --archive");
    const auto last = detail::last_generation(*archive);
    const fs::path p = last ? generation_dir(*archive, *last) / "discriminator.ckpt" : *archive / "gen_0" / "discriminator.ckpt";
    ckpts.push_back(p.string());
  }

  auto chromosome_for = [&](TrajectoryKind k) {
    if (use_hand_tuned) {
      const auto& h = cfg.coopt.pretrain.hand_tuned;
      return h.contains(k) ? h.at(k) : default_hand_tuned(k);
    }
    return champ->row.chromosome;
  };

  if (o.mode == "generalization") {
    const auto kinds = o.kinds.empty() ? std::vector<TrajectoryKind>(std::begin(kAllTrajectoryKinds), std::end(kAllTrajectoryKinds))
                                       : detail::parse_kinds(o.kinds);
    std::vector<nn::Discriminator> nets;
    for (const auto& p : ckpts) nets.push_back(detail::load_checkpoint(p, cfg.architecture()));
    std::map<TrajectoryKind, Chromosome> chroms;
    for (auto k : kinds) chroms[k] = chromosome_for(k);
    const auto matrix = eval_generalization(nets, cfg, kinds, chroms, o.experiments, seed, use_hand_tuned);
    std::string csv = "checkpoint";
    for (auto k : kinds) csv += "," + std::string(to_string(k));
    csv += "\n";
    for (std::size_t n = 0; n < nets.size(); ++n) {
      csv += pflock::detail::sanitize(ckpts[n]);
      for (double a : matrix[n]) csv += "," + format_double(a);
      csv += "\n";
    }
    detail::write_text(out_dir / "generalization_matrix.csv", csv);
    out << csv;
    return kExitOk;
  }

  if (o.mode == "noise") {
    const auto net = detail::load_checkpoint(ckpts.front(), cfg.architecture());
    TrajectoryKind kind = cfg.coopt.trajectory;
    if (o.kind) kind = detail::parse_kinds({*o.kind}).front();
    const auto acc = eval_noise_robustness(net, cfg, chromosome_for(kind), kind, o.variances, o.experiments, seed,
                                           use_hand_tuned);
    std::string csv = "variance,accuracy\n";
    for (std::size_t v = 0; v < acc.size(); ++v) csv += format_double(o.variances[v]) + "," + format_double(acc[v]) + "\n";
    detail::write_text(out_dir / "noise_accuracy.csv", csv);
    out << csv;
    return kExitOk;
  }

  if (o.mode == "replay") {
    if (!archive) throw ConfigError("archive", "replay needs --archive");
    const std::size_t m = cfg.ga.population_size;
    std::size_t id = 0;
    if (o.experiment) {
      id = *o.experiment;
    } else if (champ) {
      id = champ->row.experiment_id;
    } else {
      throw ConfigError("archive", "no completed generation to replay");
    }
    const fs::path log = generation_dir(*archive, id / m) / "offspring.csv";
    if (!fs::exists(log)) throw ConfigError("experiment", "experiment " + std::to_string(id) + " is not archived");
    const auto rows = read_log_csv(log);
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const LogRow& r) { return r.experiment_id == id; });
    if (it == rows.end()) throw ConfigError("experiment", "experiment " + std::to_string(id) + " is not archived");
    SimConfig sim = cfg.sim;
    sim.seed = experiment_seed(cfg.coopt.master_seed, id, 0);
    const auto& traj = cfg.trajectory(cfg.coopt.trajectory);
    const auto trace = simulate(it->chromosome, traj, sim);
    const double f = flocking_loss(trace, traj, cfg.metrics).value;
    std::ostringstream os;
    write_trace_csv(os, trace);
    const fs::path path = out_dir / ("replay_exp_" + std::to_string(id) + ".csv");
    detail::write_text(path, os.str());
    out << "trace " << path.string() << "\nf_loss " << format_double(f) << "\narchived_f_loss " << format_double(it->f_loss)
        << "\n";
    if (cfg.ga.repeats_per_eval == 1 && !(std::abs(f - it->f_loss) <= 1e-9 * std::max(1.0, std::abs(f)))) {
      err << "replayed f_loss differs from the archived value\n";
      return kExitRuntime;
    }
    return kExitOk;
  }
  throw ConfigError("mode", "unknown evaluate mode " + o.mode + " (generalization, noise, replay)");
}

struct ExportOptions {
  std::string product;
  std::string out;
};

inline int cmd_export(const GlobalOptions& g, const ExportOptions& o, std::ostream& out, std::ostream&) {
  if (g.archive.empty()) throw ConfigError("archive", "--archive is required");
  const fs::path archive = g.archive;
  const fs::path out_dir = o.out.empty() ? archive / "export" : fs::path(o.out);
  fs::create_directories(out_dir);
  const auto done = completed_generations(archive);

  if (o.product == "losses") {
    std::string csv = "generation,kind,f_loss,upsilon,p_loss\n";
    for (auto gen : done) {
      const fs::path dir = generation_dir(archive, gen);
      for (const auto& [file, kind] : {std::pair{"population.csv", "population"}, std::pair{"offspring.csv", "experiment"}})
        for (const auto& r : read_log_csv(dir / file))
          csv += std::to_string(gen) + "," + kind + "," + format_double(r.f_loss) + "," + format_double(r.upsilon) + "," +
                 format_double(r.p_loss) + "\n";
    }
    detail::write_text(out_dir / "losses.csv", csv);
    out << (out_dir / "losses.csv").string() << "\n";
    return kExitOk;
  }

  if (o.product == "metrics") {
    std::string csv = "generation,experiment_id,mean_alignment";
    for (std::size_t k = 1; k < kMetricCount; ++k) csv += "," + std::string(kMetricNames[k]);
    csv += ",f_loss\n";
    for (auto gen : done)
      for (const auto& r : read_metrics_csv(generation_dir(archive, gen) / "metrics.csv")) {
        csv += std::to_string(gen) + "," + std::to_string(r.experiment_id) + "," + format_double(-r.metrics.m[0]);
        for (std::size_t k = 1; k < kMetricCount; ++k) csv += "," + format_double(r.metrics.m[k]);
        csv += "," + format_double(r.f_loss) + "\n";
      }
    detail::write_text(out_dir / "metrics.csv", csv);
    out << (out_dir / "metrics.csv").string() << "\n";
    return kExitOk;
  }

  if (o.product == "trajectories") {
    std::string csv = "t,robot_id,is_leader,px,py,pz,vx,vy,vz\n";
    if (const auto champ = detail::champion(archive)) {
      const WorkbenchConfig cfg = archived_config(archive);
      const std::size_t id = champ->row.experiment_id;
      const fs::path trace = generation_dir(archive, id / cfg.ga.population_size) / "traces" / ("exp_" + std::to_string(id) + ".csv");
      if (fs::exists(trace)) {
        csv = read_file(trace);
      } else {
        SimConfig sim = cfg.sim;
        sim.seed = experiment_seed(cfg.coopt.master_seed, id, 0);
        std::ostringstream os;
        write_trace_csv(os, simulate(champ->row.chromosome, cfg.trajectory(cfg.coopt.trajectory), sim));
        csv = os.str();
      }
    }
    detail::write_text(out_dir / "champion_trajectory.csv", csv);
    out << (out_dir / "champion_trajectory.csv").string() << "\n";
    return kExitOk;
  }
  throw ConfigError("product", "unknown export product " + o.product + " (losses, metrics, trajectories)");
}

// ---------------------------------------------------------------------------------------------

// Pulls "--a.b value" and "--a.b=value" pairs out of args; they become config overrides.
inline Overrides extract_overrides(std::vector<std::string>& args) {
  Overrides out;
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    const bool dotted = a.size() > 2 && a.compare(0, 2, "--") == 0 && a.find('.') != std::string::npos &&
                        (a.find('=') == std::string::npos || a.find('.') < a.find('='));
    if (!dotted) {
      rest.push_back(a);
      continue;
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      out.emplace_back(a.substr(2), args[++i]);
    } else {
      throw ConfigError(a.substr(2), "override needs a value");
    }
  }
  args = std::move(rest);
  return out;
}

// args excludes the program name.
inline int run_cli(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  GlobalOptions g;
  for (const auto& a : args) g.command_line += (g.command_line.empty() ? "" : " ") + a;
  g.command_line = "pflock " + g.command_line;
  try {
    g.overrides = extract_overrides(args);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  CLI::App app{"Privacy-aware flocking co-optimization workbench", "pflock"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  app.add_option("--config", g.config, "JSON configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "Master seed");
  auto* workers_opt = app.add_option("--workers", workers, "Concurrent chromosome evaluations")->check(CLI::PositiveNumber);
  app.add_option("--archive", g.archive, "Run archive directory");

  PretrainOptions po;
  std::size_t samples = 0, epochs = 0;
  auto* pre = app.add_subcommand("pretrain", "Pre-train the discriminator on hand-tuned flocking")->fallthrough();
  pre->add_option("--out", po.out, "Checkpoint path");
  auto* samples_opt = pre->add_option("--samples", samples, "Number of simulated experiments");
  auto* epochs_opt = pre->add_option("--epochs", epochs, "Training epochs");

  CooptimizeOptions co;
  std::size_t generations = 0, population = 0;
  double duration = 0.0;
  auto* coopt = app.add_subcommand("cooptimize", "Run the GA / discriminator loop")->fallthrough();
  coopt->add_option("--checkpoint", co.checkpoint, "Pre-trained discriminator");
  coopt->add_flag("--fresh-discriminator", co.fresh_discriminator, "Start from an untrained discriminator");
  coopt->add_flag("--resume", co.resume, "Continue from the last completed generation");
  coopt->add_flag("--no-traces", co.no_traces, "Skip per-experiment trace CSVs");
  auto* gen_opt = coopt->add_option("--generations", generations, "GA generations");
  auto* pop_opt = coopt->add_option("--population", population, "Population size M");
  auto* dur_opt = coopt->add_option("--duration", duration, "Flight duration in seconds");

  EvaluateOptions eo;
  std::size_t experiment = 0;
  std::string kind;
  auto* eval = app.add_subcommand("evaluate", "Generalization, noise robustness or replay")->fallthrough();
  eval->add_option("mode", eo.mode, "generalization | noise | replay")->required();
  eval->add_option("--checkpoint", eo.checkpoints, "Discriminator checkpoint(s)");
  eval->add_option("--kinds", eo.kinds, "Trajectory kinds")->delimiter(',');
  eval->add_option("--variances", eo.variances, "Noise variances")->delimiter(',');
  eval->add_option("--experiments", eo.experiments, "Fresh experiments per cell");
  auto* exp_opt = eval->add_option("--experiment", experiment, "Experiment id to replay");
  auto* kind_opt = eval->add_option("--kind", kind, "Trajectory kind for noise mode");
  eval->add_flag("--hand-tuned", eo.hand_tuned, "Fly the hand-tuned chromosomes instead of the champion");
  eval->add_option("--out", eo.out, "Output directory");

  ExportOptions xo;
  auto* exp = app.add_subcommand("export", "Flatten an archive into plot-ready CSVs")->fallthrough();
  exp->add_option("product", xo.product, "losses | metrics | trajectories")->required();
  exp->add_option("--out", xo.out, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (*seed_opt) g.seed = seed;
  if (*workers_opt) g.workers = workers;
  if (*samples_opt) po.samples = samples;
  if (*epochs_opt) po.epochs = epochs;
  if (*gen_opt) co.generations = generations;
  if (*pop_opt) co.population = population;
  if (*dur_opt) co.duration = duration;
  if (*exp_opt) eo.experiment = experiment;
  if (*kind_opt) eo.kind = kind;

  try {
    if (pre->parsed()) return cmd_pretrain(g, po, out, err);
    if (coopt->parsed()) return cmd_cooptimize(g, co, out, err);
    if (eval->parsed()) return cmd_evaluate(g, eo, out, err);
    if (exp->parsed()) return cmd_export(g, xo, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return eval->parsed() || coopt->parsed() ? kExitConfig : kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

inline int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args));
}

}  // namespace pflock::cli

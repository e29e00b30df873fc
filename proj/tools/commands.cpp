#include "commands.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "attnthermo/equilibrium.hpp"
#include "attnthermo/nn/checkpoint.hpp"
#include "attnthermo/scaling.hpp"
#include "attnthermo/util/csv.hpp"
#include "attnthermo/util/manifest.hpp"
#include "attnthermo/util/numerics.hpp"
#include "attnthermo/util/rng.hpp"
#include "attnthermo/util/svg_plot.hpp"

namespace attnthermo_cli {

namespace fs = std::filesystem;
using namespace thermo;

std::string default_out_root() {
  if (const char* env = std::getenv("ATTNTHERMO_OUT"); env && *env)
    return env;
  return "runs";
}

std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  std::vector<std::uint64_t> out;
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    const std::uint64_t lo = std::stoull(spec.substr(0, dots));
    const std::uint64_t hi = std::stoull(spec.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("seed range is empty: " + spec);
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
    return out;
  }
  std::size_t pos = 0;
  while (pos < spec.size()) {
    const auto comma = spec.find(',', pos);
    const auto tok = spec.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!tok.empty()) out.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (out.empty()) throw std::invalid_argument("no seeds in: " + spec);
  return out;
}

namespace {

std::mutex g_print_mutex;

void refuse_existing(const fs::path& path, bool force) {
  if (!force && fs::exists(path))
    throw std::runtime_error(path.string() +
                             " already exists (use --force to overwrite)");
}

util::RunManifest start_manifest(const std::string& command,
                                 const CommonArgs& common,
                                 const nlohmann::json& config,
                                 std::vector<std::uint64_t> seeds) {
  util::RunManifest m;
  m.command = command;
  m.argv = common.argv;
  m.config_json = config.dump();
  m.seeds = std::move(seeds);
  m.started_at = util::timestamp_now(common.reproducible);
  m.status = "running";
  return m;
}

void finalize_manifest(const fs::path& path, util::RunManifest& m,
                       bool reproducible, bool ok) {
  m.finished_at = util::timestamp_now(reproducible);
  m.status = ok ? "completed" : "failed";
  util::write_manifest(path, m);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- equilibrium

int cmd_equilibrium(const EquilibriumArgs& args) {
  std::vector<double> energies = args.energies;
  if (args.random_n > 0) {
    util::Rng rng(args.seed);
    energies.resize(static_cast<std::size_t>(args.random_n));
    for (auto& e : energies) e = rng.gauss();
  }
  if (energies.empty())
    throw std::invalid_argument("supply --energies or --random N");
  const equilibrium::EnergyVector e(energies);
  const auto state = equilibrium::softmax_equilibrium(e, args.temperature);
  const std::int64_t vctx = args.context_volume > 0
                                ? args.context_volume
                                : static_cast<std::int64_t>(e.size());
  const auto obs = equilibrium::observables(state, vctx);

  std::cout << "softmax equilibrium (N = " << e.size()
            << ", T = " << fmt(args.temperature) << ")\n  rho = [";
  for (std::size_t i = 0; i < state.rho.size(); ++i)
    std::cout << (i ? ", " : "") << fmt(state.rho[i]);
  std::cout << "]\n";
  std::cout << "  Z = " << fmt(obs.Z) << "  (log Z = " << fmt(obs.log_Z)
            << ")\n";
  std::cout << "  U = " << fmt(obs.U) << "\n  S = " << fmt(obs.S)
            << "\n  F = " << fmt(obs.F) << "\n  Cv = " << fmt(obs.Cv)
            << "\n  pressure = " << fmt(obs.pressure) << "  (V_ctx = " << vctx
            << ")\n";
  double gmax = 0.0;
  for (double v : equilibrium::project_gradient(
           equilibrium::free_energy_gradient(state)))
    gmax = std::max(gmax, std::abs(v));
  std::cout << "  projected-gradient max-norm at equilibrium = " << fmt(gmax)
            << "\n";

  if (args.relax) {
    equilibrium::DynamicsConfig cfg;
    const auto res = equilibrium::relax_to_equilibrium(
        e, args.temperature,
        infogeom::ProbabilityVector::normalized(
            std::vector<double>(e.size(), 1.0)),
        cfg);
    double l1 = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i)
      l1 += std::abs(res.state.rho[i] - state.rho[i]);
    std::cout << "relaxation from uniform: " << res.steps << " steps, "
              << (res.converged ? "converged" : "NOT converged")
              << ", final L1 gap to closed-form softmax = " << fmt(l1) << "\n";
    if (!args.trace_path.empty()) {
      refuse_existing(args.trace_path, args.common.force);
      util::CsvWriter w(args.trace_path, "relax-trace-v1",
                        {"step", "free_energy", "proj_grad_max"});
      for (std::size_t k = 0; k < res.trajectory.size(); ++k) {
        const auto& rho = res.trajectory[k];
        double gm = 0.0;
        for (double v : equilibrium::project_gradient(
                 equilibrium::free_energy_gradient(equilibrium::AttentionState(
                     e, args.temperature, rho))))
          gm = std::max(gm, std::abs(v));
        w.write_row(std::vector<double>{
            static_cast<double>(k),
            equilibrium::free_energy_functional(e, args.temperature, rho),
            gm});
      }
      std::cout << "trace written to " << args.trace_path << "\n";
    }
    if (!res.converged) return 1;
  }
  return 0;
}

// ------------------------------------------------------------------- langevin

int cmd_langevin(const LangevinArgs& args) {
  const std::string name = args.run_name.empty()
                               ? "langevin_seed" + std::to_string(args.cfg.seed)
                               : args.run_name;
  const fs::path dir = fs::path(args.common.out_root) / name;
  refuse_existing(dir / "trajectory.csv", args.common.force);
  fs::create_directories(dir);

  nlohmann::json config = {
      {"beta", args.pot.beta},
      {"v", args.pot.v},
      {"alpha_start", args.schedule.alpha_start},
      {"alpha_end", args.schedule.alpha_end},
      {"anneal_time", args.schedule.total_time},
      {"dt", args.cfg.dt},
      {"diffusion", args.cfg.diffusion},
      {"n_particles", args.cfg.n_particles},
      {"n_steps", args.cfg.n_steps},
      {"window", args.cfg.window},
      {"field_dim", args.cfg.field_dim},
      {"init_radius", args.cfg.init_radius},
      {"seed", args.cfg.seed},
      {"parameter_provenance", "defaults are artifact calibration choices"},
  };
  auto manifest =
      start_manifest("langevin", args.common, config, {args.cfg.seed});
  const fs::path manifest_path = dir / "manifest.json";
  util::write_manifest(manifest_path, manifest);

  langevin::LangevinTrajectory traj;
  try {
    traj = langevin::simulate(args.pot, args.schedule, args.cfg);
  } catch (const std::exception&) {
    finalize_manifest(manifest_path, manifest, args.common.reproducible, false);
    throw;
  }

  {
    util::CsvWriter w(dir / "trajectory.csv", "langevin-trajectory-v1",
                      {"t", "mean_abs_phi", "energy_mean", "energy_var", "cv"});
    for (std::size_t i = 0; i < traj.times.size(); ++i)
      w.write_row(std::vector<double>{traj.times[i], traj.mean_abs_phi[i],
                                      traj.energy_mean[i], traj.energy_var[i],
                                      traj.cv[i]});
  }

  util::LinePlotSpec plot;
  plot.title = "Langevin anneal: order parameter and specific heat";
  plot.xlabel = "t";
  plot.ylabel = "cv";
  plot.y2label = "<|Phi|>";
  util::Series cv_series{"cv", traj.times, traj.cv, "#d62728", false, false};
  util::Series phi_series{"<|Phi|>", traj.times, traj.mean_abs_phi, "#1f77b4",
                          true, false};
  plot.series = {cv_series, phi_series};
  const auto summary = langevin::summarize_crossover(traj);
  plot.vlines = {traj.times[static_cast<std::size_t>(summary.peak_window)]};
  util::write_line_plot(dir / "plot.svg", plot);

  nlohmann::json sj = {
      {"schema", "langevin-summary-v1"},
      {"peak_window", summary.peak_window},
      {"peak_time", traj.times[static_cast<std::size_t>(summary.peak_window)]},
      {"peak_cv", summary.peak_cv},
      {"pre_transition_median_cv", summary.pre_transition_median_cv},
      {"peak_ratio", summary.peak_ratio},
      {"transition_window", summary.transition_window},
      {"initial_order_param", summary.initial_order_param},
      {"final_order_param", summary.final_order_param},
  };
  std::ofstream(dir / "summary.json") << sj.dump(2) << "\n";

  finalize_manifest(manifest_path, manifest, args.common.reproducible, true);

  std::cout << "langevin run written to " << dir.string() << "\n"
            << "  cv peak " << fmt(summary.peak_cv) << " at t = "
            << fmt(traj.times[static_cast<std::size_t>(summary.peak_window)])
            << " (window " << summary.peak_window << ")\n"
            << "  pre-transition median cv = "
            << fmt(summary.pre_transition_median_cv)
            << "  peak ratio = " << fmt(summary.peak_ratio) << "\n"
            << "  order parameter: " << fmt(summary.initial_order_param)
            << " -> " << fmt(summary.final_order_param) << "\n";
  return 0;
}

// ----------------------------------------------------------------------- grok

namespace {

nlohmann::json grok_config_json(const GrokArgs& args) {
  return {
      {"moduli", args.moduli},
      {"seeds", args.seeds},
      {"n_layers", args.model.n_layers},
      {"d_model", args.model.d_model},
      {"n_heads", args.model.n_heads},
      {"use_rope", args.model.use_rope},
      {"mlp_mult", args.model.mlp_mult},
      {"learning_rate", args.opt.learning_rate},
      {"weight_decay", args.opt.weight_decay},
      {"beta1", args.opt.beta1},
      {"beta2", args.opt.beta2},
      {"epsilon", args.opt.epsilon},
      {"max_epochs", args.schedule.max_epochs},
      {"eval_every", args.schedule.eval_every},
      {"batch_size", args.schedule.batch_size},
      {"early_stop", args.schedule.early_stop},
      {"early_stop_acc", args.schedule.early_stop_acc},
      {"patience", args.schedule.patience},
      {"probe_batch", args.schedule.probe_batch},
      {"cv_column", grokking::cv_column_name(args.cv_column)},
      {"smoke", args.smoke},
  };
}

void write_run_plot(const fs::path& path,
                    const std::vector<grokking::TrainRunRecord>& records,
                    const grokking::RunSummary& summary) {
  util::LinePlotSpec plot;
  plot.title = "p = " + std::to_string(summary.p) +
               ", seed = " + std::to_string(summary.seed);
  plot.xlabel = "epoch";
  plot.ylabel = "cv";
  plot.y2label = "accuracy";
  util::Series cv{grokking::cv_column_name(summary.cv_column),
                  {}, {}, "#d62728", false, false};
  util::Series val{"val_acc", {}, {}, "#1f77b4", true, false};
  util::Series train{"train_acc", {}, {}, "#2ca02c", true, false};
  for (const auto& r : records) {
    const auto x = static_cast<double>(r.epoch);
    cv.x.push_back(x);
    cv.y.push_back(summary.cv_column == grokking::CvColumn::Weighted
                       ? r.cv_weighted
                       : r.cv_unweighted);
    val.x.push_back(x);
    val.y.push_back(r.val_acc);
    train.x.push_back(x);
    train.y.push_back(r.train_acc);
  }
  plot.series = {cv, val, train};
  if (summary.cv_peak_epoch >= 0)
    plot.vlines.push_back(static_cast<double>(summary.cv_peak_epoch));
  util::write_line_plot(path, plot);
}

}  // namespace

int cmd_grok(GrokArgs args) {
  if (args.smoke) {
    args.model.d_model = 64;
    args.schedule.max_epochs = 5000;
  }
  args.schedule.reproducible = args.common.reproducible;
  for (auto p : args.moduli) {
    if (!grokking::is_prime(p))
      throw std::invalid_argument("p = " + std::to_string(p) + " is not prime");
  }
  if (args.seeds.empty()) throw std::invalid_argument("no seeds given");

  struct Task {
    std::int64_t p;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (auto p : args.moduli)
    for (auto s : args.seeds) tasks.push_back({p, s});

  const fs::path root(args.common.out_root);
  fs::create_directories(root);
  for (const auto& t : tasks) {
    const fs::path dir =
        root / ("p" + std::to_string(t.p) + "_s" + std::to_string(t.seed));
    refuse_existing(dir / "metrics.csv", args.common.force);
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  std::vector<grokking::RunSummary> summaries(tasks.size());
  std::vector<char> ok(tasks.size(), 0);

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const auto [p, seed] = tasks[i];
      const fs::path dir =
          root / ("p" + std::to_string(p) + "_s" + std::to_string(seed));
      fs::create_directories(dir);
      auto manifest =
          start_manifest("grok", args.common, grok_config_json(args), {seed});
      const fs::path manifest_path = dir / "manifest.json";
      util::write_manifest(manifest_path, manifest);
      try {
        const std::string tag =
            "[p" + std::to_string(p) + " s" + std::to_string(seed) + "]";
        grokking::ProgressFn progress =
            [&](const grokking::TrainRunRecord& r) {
              if (args.progress_every > 0 &&
                  r.epoch % args.progress_every == 0) {
                std::lock_guard<std::mutex> lock(g_print_mutex);
                std::cout << tag << " epoch " << r.epoch << "  train_acc "
                          << fmt(r.train_acc) << "  val_acc " << fmt(r.val_acc)
                          << "  cv "
                          << fmt(args.cv_column == grokking::CvColumn::Weighted
                                     ? r.cv_weighted
                                     : r.cv_unweighted)
                          << "\n";
              }
            };
        nn::Transformer final_model{};
        auto result =
            grokking::run_experiment(p, args.model, args.opt, args.schedule,
                                     seed, args.cv_column, progress,
                                     args.save_checkpoint ? &final_model
                                                          : nullptr);
        grokking::write_metrics_csv(dir / "metrics.csv", result.records);
        grokking::write_summary_json(dir / "summary.json", result.summary);
        write_run_plot(dir / "run.svg", result.records, result.summary);
        if (args.save_checkpoint)
          nn::save_checkpoint(dir / "checkpoint.bin", final_model);
        summaries[i] = result.summary;
        ok[i] = result.summary.status == "completed" ? 1 : 0;
        if (!ok[i]) ++failures;
        finalize_manifest(manifest_path, manifest, args.common.reproducible,
                          ok[i] != 0);
        std::lock_guard<std::mutex> lock(g_print_mutex);
        std::cout << tag << " done: status " << result.summary.status
                  << ", epochs " << result.summary.epochs_run << ", val_acc "
                  << fmt(result.summary.final_val_acc) << ", cv peak at epoch "
                  << result.summary.cv_peak_epoch << "\n";
      } catch (const std::exception& e) {
        ++failures;
        finalize_manifest(manifest_path, manifest, args.common.reproducible,
                          false);
        std::lock_guard<std::mutex> lock(g_print_mutex);
        std::cerr << "[p" << p << " s" << seed << "] failed: " << e.what()
                  << "\n";
      }
    }
  };

  const int n_workers =
      std::max(1, std::min<int>(args.jobs, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  for (auto p : args.moduli) {
    std::vector<grokking::RunSummary> group;
    for (std::size_t i = 0; i < tasks.size(); ++i)
      if (tasks[i].p == p && ok[i]) group.push_back(summaries[i]);
    if (group.size() < 2) {
      std::cout << "p = " << p << ": " << group.size()
                << " successful run(s); no aggregate\n";
      continue;
    }
    const auto agg = grokking::aggregate_seeds(group);
    std::cout << "p = " << p << " aggregate over " << agg.n_seeds
              << " seeds: cv_peak = " << fmt(agg.cv_peak_mean) << " +/- "
              << fmt(agg.cv_peak_std)
              << ", precedence_fraction = " << fmt(agg.precedence_fraction)
              << "\n";
    nlohmann::json aj = {
        {"schema", "grok-aggregate-v1"},
        {"p", p},
        {"n_seeds", agg.n_seeds},
        {"cv_peak_mean", agg.cv_peak_mean},
        {"cv_peak_std", agg.cv_peak_std},
        {"precedence_fraction", agg.precedence_fraction},
    };
    std::ofstream(root / ("aggregate_p" + std::to_string(p) + ".json"))
        << aj.dump(2) << "\n";
  }
  const bool all_failed = failures == static_cast<int>(tasks.size());
  return all_failed ? 1 : 0;
}

// -------------------------------------------------------------------- scaling

int cmd_scaling(const ScalingArgs& args) {
  std::vector<fs::path> dirs;
  for (const auto& d : args.run_dirs) {
    const fs::path path(d);
    if (fs::exists(path / "summary.json") || !fs::is_directory(path)) {
      dirs.push_back(path);
      continue;
    }
    // expand one level: a parent directory holding run dirs
    bool found = false;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.is_directory() && fs::exists(entry.path() / "summary.json")) {
        dirs.push_back(entry.path());
        found = true;
      }
    }
    if (!found) dirs.push_back(path);  // the table builder will warn about it
  }

  const auto table = scaling::build_scaling_table(dirs);
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";

  const fs::path out = fs::path(args.common.out_root) / "scaling";
  refuse_existing(out / "scaling_table.csv", args.common.force);
  fs::create_directories(out);
  auto manifest = start_manifest(
      "scaling", args.common,
      {{"weighted", args.weighted}, {"n_dirs", dirs.size()}}, {});
  const fs::path manifest_path = out / "manifest.json";
  util::write_manifest(manifest_path, manifest);

  scaling::write_scaling_csv(out / "scaling_table.csv", table.points);
  std::cout << "scaling table (" << table.points.size() << " moduli):\n";
  for (const auto& pt : table.points)
    std::cout << "  p = " << pt.p << "  cv_peak = " << fmt(pt.cv_peak_mean)
              << " +/- " << fmt(pt.cv_peak_std) << "  (n = " << pt.n_seeds
              << ")\n";

  if (table.points.size() < 3) {
    finalize_manifest(manifest_path, manifest, args.common.reproducible, false);
    std::cerr << "fit refused: a power-law fit needs at least 3 moduli, got "
              << table.points.size() << "\n";
    return 1;
  }

  const auto fit = scaling::fit_power_law(table.points, args.weighted);
  scaling::write_fit_json(out / "fit.json", fit);

  util::LinePlotSpec plot;
  plot.title = "Specific-heat peak vs modulus";
  plot.xlabel = "p";
  plot.ylabel = "cv peak";
  plot.log_x = true;
  plot.log_y = true;
  util::Series pts{"measured", {}, {}, "#1f77b4", false, true};
  util::Series line{"fit", {}, {}, "#d62728", false, false};
  for (const auto& pt : table.points) {
    pts.x.push_back(static_cast<double>(pt.p));
    pts.y.push_back(pt.cv_peak_mean);
    const double lo = std::max(1e-12, pt.cv_peak_mean - pt.cv_peak_std);
    plot.error_bars.push_back(
        {static_cast<double>(pt.p), lo, pt.cv_peak_mean + pt.cv_peak_std});
    line.x.push_back(static_cast<double>(pt.p));
    line.y.push_back(std::exp(
        fit.intercept + fit.exponent_a * std::log(static_cast<double>(pt.p))));
  }
  plot.series = {pts, line};
  util::write_line_plot(out / "scaling.svg", plot);

  finalize_manifest(manifest_path, manifest, args.common.reproducible, true);
  std::cout << "fit: exponent = " << fmt(fit.exponent_a)
            << ", intercept = " << fmt(fit.intercept)
            << ", R^2 = " << fmt(fit.r_squared)
            << (fit.weighted ? " (variance-weighted)" : " (unweighted)")
            << "\noutputs in " << out.string() << "\n";
  return 0;
}

// ------------------------------------------------------------- potential plot

int cmd_potential_plot(const PotentialPlotArgs& args) {
  const fs::path out = args.out_path.empty()
                           ? fs::path(args.common.out_root) / "potential.svg"
                           : fs::path(args.out_path);
  refuse_existing(out, args.common.force);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());

  const double rstar = langevin::trough_radius(args.pot);
  const double range =
      args.range > 0.0 ? args.range : 1.6 * std::max(rstar, args.pot.v);

  auto manifest = start_manifest("potential-plot", args.common,
                                 {{"alpha", args.pot.alpha},
                                  {"beta", args.pot.beta},
                                  {"v", args.pot.v},
                                  {"grid", args.grid},
                                  {"range", range}},
                                 {});
  const fs::path manifest_path = out.string() + ".manifest.json";
  util::write_manifest(manifest_path, manifest);

  util::HeatmapSpec hm;
  hm.title = "Coleman-Weinberg potential";
  hm.xlabel = "Re Phi";
  hm.ylabel = "Im Phi";
  hm.nx = args.grid;
  hm.ny = args.grid;
  hm.x_min = -range;
  hm.x_max = range;
  hm.y_min = -range;
  hm.y_max = range;
  hm.values.resize(static_cast<std::size_t>(args.grid) * args.grid);
  double best_v = std::numeric_limits<double>::infinity();
  double best_r = 0.0;
  for (int iy = 0; iy < args.grid; ++iy) {
    for (int ix = 0; ix < args.grid; ++ix) {
      const double x = hm.x_min + (hm.x_max - hm.x_min) * ix / (args.grid - 1);
      const double y = hm.y_min + (hm.y_max - hm.y_min) * iy / (args.grid - 1);
      const double v = langevin::cw_potential(x, y, args.pot);
      hm.values[static_cast<std::size_t>(iy) * args.grid + ix] = v;
      if (v < best_v) {
        best_v = v;
        best_r = std::hypot(x, y);
      }
    }
  }
  for (int k = 0; k <= 128; ++k) {
    const double ang = 2.0 * M_PI * k / 128.0;
    hm.overlay_circle.push_back({rstar * std::cos(ang), rstar * std::sin(ang)});
  }
  util::write_heatmap(out, hm);
  finalize_manifest(manifest_path, manifest, args.common.reproducible, true);

  const double cell = (hm.x_max - hm.x_min) / (args.grid - 1);
  std::cout << "potential surface written to " << out.string() << "\n"
            << "  grid argmin radius = " << fmt(best_r)
            << "  analytic trough radius = " << fmt(rstar)
            << "  (grid resolution " << fmt(cell) << ")\n";
  if (std::abs(best_r - rstar) > 2.0 * cell) {
    std::cerr << "grid minimum disagrees with the analytic trough radius\n";
    return 1;
  }
  return 0;
}

}  // namespace attnthermo_cli

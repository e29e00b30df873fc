#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"

using namespace attnthermo_cli;

int main(int argc, char** argv) {
  CLI::App app{
      "attnthermo: canonical-ensemble analysis of transformer attention.\n"
      "Free-energy equilibria, Langevin crossover simulation, grokking\n"
      "experiments on modular addition, and specific-heat scaling analysis."};
  app.require_subcommand(1);

  std::vector<std::string> argv_copy(argv, argv + argc);
  auto add_common = [&](CLI::App* sub, CommonArgs& common) {
    common.out_root = default_out_root();
    common.argv = argv_copy;
    sub->add_option("--out", common.out_root,
                    "output root directory (default: $ATTNTHERMO_OUT or ./runs)");
    sub->add_flag("--reproducible", common.reproducible,
                  "omit wall-clock timestamps from CSV outputs");
    sub->add_flag("--force", common.force, "overwrite existing outputs");
  };

  // ------------------------------------------------------------- equilibrium
  EquilibriumArgs eq;
  auto* eq_cmd = app.add_subcommand(
      "equilibrium", "solve and inspect the softmax free-energy equilibrium");
  add_common(eq_cmd, eq.common);
  eq_cmd->add_option("--energies", eq.energies,
                     "comma-separated energy levels")
      ->delimiter(',');
  eq_cmd->add_option("--random", eq.random_n,
                     "draw N standard-normal energies instead");
  eq_cmd->add_option("--seed", eq.seed, "seed for --random");
  eq_cmd->add_option("--temp", eq.temperature, "temperature (> 0)")
      ->required()
      ->check(CLI::PositiveNumber);
  eq_cmd->add_option("--vctx", eq.context_volume,
                     "context volume for the pressure readout (default N)");
  eq_cmd->add_flag("--relax", eq.relax,
                   "also relax from uniform and report the L1 gap");
  eq_cmd->add_option("--trace", eq.trace_path,
                     "write the relaxation trace CSV here (with --relax)");

  // ---------------------------------------------------------------- langevin
  LangevinArgs lv;
  auto* lv_cmd = app.add_subcommand(
      "langevin", "annealed overdamped Langevin run in the log potential");
  add_common(lv_cmd, lv.common);
  lv_cmd->set_config("--config");
  lv_cmd->add_option("--beta", lv.pot.beta, "log-term coefficient")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--vev", lv.pot.v, "vacuum scale v")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--alpha-start", lv.schedule.alpha_start,
                     "initial quadratic coefficient")
      ->capture_default_str();
  lv_cmd->add_option("--alpha-end", lv.schedule.alpha_end,
                     "final quadratic coefficient")
      ->capture_default_str();
  lv_cmd->add_option("--anneal-time", lv.schedule.total_time,
                     "time over which alpha ramps (then holds)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--dt", lv.cfg.dt, "integrator step")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--diffusion", lv.cfg.diffusion, "noise strength D")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--particles", lv.cfg.n_particles, "ensemble size")
      ->check(CLI::Range(std::int64_t{2}, std::int64_t{1000000}))
      ->capture_default_str();
  lv_cmd->add_option("--steps", lv.cfg.n_steps, "number of steps")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--window", lv.cfg.window, "steps per observable window")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lv_cmd->add_option("--field-dim", lv.cfg.field_dim,
                     "1 = scalar field, 2 = complex field")
      ->check(CLI::Range(1, 2))
      ->capture_default_str();
  lv_cmd->add_option("--init-radius", lv.cfg.init_radius,
                     "initial |Phi| for every particle")
      ->capture_default_str();
  lv_cmd->add_option("--seed", lv.cfg.seed, "noise seed")
      ->capture_default_str();
  lv_cmd->add_option("--name", lv.run_name,
                     "run directory name (default langevin_seed<seed>)");

  // -------------------------------------------------------------------- grok
  GrokArgs gk;
  std::string seed_spec = "0..4";
  auto* gk_cmd = app.add_subcommand(
      "grok", "train transformers on modular addition and log thermodynamics");
  add_common(gk_cmd, gk.common);
  gk_cmd->set_config("--config");
  gk_cmd->add_option("--p", gk.moduli, "prime moduli (repeatable)")
      ->capture_default_str();
  gk_cmd->add_option("--seeds", seed_spec, "seed list: '0..4' or '0,3,7'")
      ->capture_default_str();
  gk_cmd->add_option("--layers", gk.model.n_layers, "transformer layers")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--d-model", gk.model.d_model, "embedding width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--heads", gk.model.n_heads, "attention heads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_flag("--rope", gk.model.use_rope,
                   "rotary positions instead of learned absolute embeddings");
  gk_cmd->add_option("--lr", gk.opt.learning_rate, "AdamW learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--wd", gk.opt.weight_decay, "decoupled weight decay")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  gk_cmd->add_option("--max-epochs", gk.schedule.max_epochs, "epoch budget")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--eval-every", gk.schedule.eval_every,
                     "instrumentation period in epochs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--batch", gk.schedule.batch_size,
                     "batch size (clamped to the training-set size)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_option("--patience", gk.schedule.patience,
                     "epochs at val_acc >= 0.99 before early stop")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bool no_early_stop = false;
  gk_cmd->add_flag("--no-early-stop", no_early_stop, "always run max-epochs");
  std::string cv_col = "unweighted";
  gk_cmd->add_option("--cv-column", cv_col,
                     "peak detection column: weighted | unweighted")
      ->check(CLI::IsMember({"weighted", "unweighted"}))
      ->capture_default_str();
  gk_cmd->add_flag("--smoke", gk.smoke,
                   "CI preset: d_model 64, 5000 epochs (pipeline health)");
  gk_cmd->add_option("--jobs", gk.jobs, "parallel (p, seed) jobs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gk_cmd->add_flag("--save-checkpoint", gk.save_checkpoint,
                   "write the final model checkpoint per run");
  gk_cmd->add_option("--progress-every", gk.progress_every,
                     "progress print period in epochs (0 = quiet)")
      ->capture_default_str();

  // ----------------------------------------------------------------- scaling
  ScalingArgs sc;
  auto* sc_cmd = app.add_subcommand(
      "scaling", "aggregate grok run directories and fit the peak power law");
  add_common(sc_cmd, sc.common);
  sc_cmd->add_option("dirs", sc.run_dirs,
                     "run directories (or one parent directory)")
      ->required();
  sc_cmd->add_flag("--weighted", sc.weighted,
                   "variance-weighted fit (non-default)");

  // ---------------------------------------------------------- potential-plot
  PotentialPlotArgs pp;
  auto* pp_cmd = app.add_subcommand(
      "potential-plot", "render the Mexican-hat potential surface");
  add_common(pp_cmd, pp.common);
  pp_cmd->add_option("--alpha", pp.pot.alpha, "quadratic coefficient")
      ->capture_default_str();
  pp_cmd->add_option("--beta", pp.pot.beta, "log-term coefficient")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pp_cmd->add_option("--vev", pp.pot.v, "vacuum scale v")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pp_cmd->add_option("--grid", pp.grid, "grid resolution per axis")
      ->check(CLI::Range(11, 4001))
      ->capture_default_str();
  pp_cmd->add_option("--range", pp.range,
                     "half-width of the plotted square (0 = auto)");
  pp_cmd->add_option("--image", pp.out_path,
                     "output image path (default <out>/potential.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage hint
    return 2;
  }

  try {
    if (*eq_cmd) return cmd_equilibrium(eq);
    if (*lv_cmd) return cmd_langevin(lv);
    if (*gk_cmd) {
      gk.seeds = parse_seed_spec(seed_spec);
      gk.schedule.early_stop = !no_early_stop;
      gk.cv_column = thermo::grokking::parse_cv_column(cv_col);
      return cmd_grok(gk);
    }
    if (*sc_cmd) return cmd_scaling(sc);
    if (*pp_cmd) return cmd_potential_plot(pp);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

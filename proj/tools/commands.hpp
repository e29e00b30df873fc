#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnthermo/grokking.hpp"
#include "attnthermo/langevin.hpp"
#include "attnthermo/nn/adamw.hpp"
#include "attnthermo/nn/transformer.hpp"

namespace attnthermo_cli {

// Shared bits every file-writing command carries: the resolved output
// location, the original command line (echoed into the manifest), and the
// reproducibility/overwrite switches.
struct CommonArgs {
  std::string out_root;             // default: $ATTNTHERMO_OUT or ./runs
  std::vector<std::string> argv;
  bool reproducible = false;        // blank wall-clock fields in CSV outputs
  bool force = false;               // allow overwriting existing outputs
};

std::string default_out_root();

struct EquilibriumArgs {
  CommonArgs common;
  std::vector<double> energies;     // explicit energies, or:
  std::int64_t random_n = 0;        // draw N standard-normal energies
  std::uint64_t seed = 0;
  double temperature = 1.0;
  std::int64_t context_volume = 0;  // 0 = use N
  bool relax = false;
  std::string trace_path;           // optional relaxation trace CSV
};
int cmd_equilibrium(const EquilibriumArgs& args);

struct LangevinArgs {
  CommonArgs common;
  thermo::langevin::CWPotentialParams pot;
  thermo::langevin::AnnealSchedule schedule;
  thermo::langevin::LangevinConfig cfg;
  std::string run_name;             // default langevin_seed<seed>
};
int cmd_langevin(const LangevinArgs& args);

struct GrokArgs {
  CommonArgs common;
  std::vector<std::int64_t> moduli = {19};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  thermo::nn::TransformerConfig model;
  thermo::nn::OptimizerConfig opt;
  thermo::grokking::TrainSchedule schedule;
  thermo::grokking::CvColumn cv_column =
      thermo::grokking::CvColumn::Unweighted;
  bool smoke = false;               // CI preset: d_model 64, 5000 epochs
  int jobs = 1;
  bool save_checkpoint = false;
  std::int64_t progress_every = 500;
};
int cmd_grok(GrokArgs args);

struct ScalingArgs {
  CommonArgs common;
  std::vector<std::string> run_dirs;
  bool weighted = false;
};
int cmd_scaling(const ScalingArgs& args);

struct PotentialPlotArgs {
  CommonArgs common;
  thermo::langevin::CWPotentialParams pot;
  int grid = 201;
  double range = 0.0;               // 0 = auto from the trough radius
  std::string out_path;             // image file
};
int cmd_potential_plot(const PotentialPlotArgs& args);

// "0..4" or "0,2,5" -> list of seeds.
std::vector<std::uint64_t> parse_seed_spec(const std::string& spec);

}  // namespace attnthermo_cli

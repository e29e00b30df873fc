#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attnthermo/nn/adamw.hpp"
#include "attnthermo/nn/transformer.hpp"
#include "attnthermo/util/manifest.hpp"

// Experiment harness for grokking on modular addition: dataset generation,
// single-run training with per-epoch thermodynamic instrumentation,
// transition/peak detection, seed aggregation, and run-directory persistence.
namespace thermo::grokking {

bool is_prime(std::int64_t n);

// One example is the sequence [a, b, eq] with label (a + b) mod p; eq is the
// extra token id p, so vocab_size = p + 1 and the loss applies at the final
// position only.
struct Example {
  std::int64_t a, b, label;
};

struct ModAddDataset {
  std::int64_t p = 0;
  std::uint64_t split_seed = 0;
  double train_fraction = 0.5;
  std::vector<Example> train;
  std::vector<Example> val;
};

// Exhaustive enumeration of all p^2 pairs, shuffled by split_seed, with
// exactly floor(p^2 * train_fraction) training examples. p must be prime
// (the experiment's moduli are) and within [3, 10007].
ModAddDataset generate_dataset(std::int64_t p, std::uint64_t split_seed,
                               double train_fraction = 0.5);

// Per-epoch instrumentation row. Train metrics are averaged over the epoch's
// minibatches (measured before each update); the epoch-0 row is a pure
// forward evaluation of the untouched model. cv columns are measured on a
// fixed held-out probe batch; cv_weighted uses the rho-weighted energy
// variance at T = 1 (energies are already in softmax-natural units),
// cv_unweighted the plain variance of the scaled attention logits.
struct TrainRunRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0, val_loss = 0.0;
  double train_acc = 0.0, val_acc = 0.0;
  double cv_weighted = 0.0, cv_unweighted = 0.0;
  double weight_norm_sq = 0.0;
  double t_eff = 0.0;
  double attn_entropy = 0.0;
  std::string timestamp;  // ISO-8601 UTC; empty in reproducible mode
};

enum class CvColumn { Weighted, Unweighted };
std::string cv_column_name(CvColumn c);
CvColumn parse_cv_column(const std::string& name);

struct TrainSchedule {
  std::int64_t max_epochs = 30000;
  std::int64_t eval_every = 1;
  std::int64_t batch_size = 512;      // effective batch = min(batch, train)
  bool early_stop = true;
  double early_stop_acc = 0.99;
  std::int64_t patience = 500;        // epochs at/above early_stop_acc
  std::int64_t probe_batch = 256;     // held-out probe size (or full val)
  bool reproducible = false;          // blank timestamps in records
};

struct RunSummary {
  std::int64_t p = 0;
  std::uint64_t seed = 0;
  std::string status = "completed";   // completed | diverged
  CvColumn cv_column = CvColumn::Unweighted;
  std::int64_t cv_peak_epoch = -1;
  double cv_peak_value = 0.0;
  std::optional<std::int64_t> generalization_epoch;
  std::optional<std::int64_t> memorization_epoch;
  bool peak_precedes_generalization = false;
  std::int64_t epochs_run = 0;
  double final_train_acc = 0.0, final_val_acc = 0.0;
};

struct ExperimentResult {
  std::vector<TrainRunRecord> records;
  RunSummary summary;
};

using ProgressFn = std::function<void(const TrainRunRecord&)>;

// Trains a fresh model (split and initialization both derived from `seed`)
// until max_epochs or early stop, logging every eval_every epochs. Training
// divergence (non-finite loss) marks the run "diverged" and returns the
// partial records. Single-threaded and bit-for-bit deterministic in
// (seed, config, data order). When final_model_out is non-null the trained
// model is copied there (for checkpointing).
ExperimentResult run_experiment(std::int64_t p,
                                const nn::TransformerConfig& model_cfg,
                                const nn::OptimizerConfig& opt_cfg,
                                const TrainSchedule& schedule,
                                std::uint64_t seed,
                                CvColumn cv_column = CvColumn::Unweighted,
                                const ProgressFn& progress = nullptr,
                                nn::Transformer* final_model_out = nullptr);

struct TransitionInfo {
  std::optional<std::int64_t> generalization_epoch;
  std::optional<std::int64_t> memorization_epoch;
  std::int64_t cv_peak_epoch = -1;
  double cv_peak_value = 0.0;
};

// Detection on smoothed series (centered moving average, `smooth_window`
// evaluation points). generalization_epoch is the first epoch whose smoothed
// val_acc reaches acc_threshold; the cv peak is the argmax of the smoothed cv
// series restricted to records before generalization + window (global argmax
// when generalization never happens), ties broken to the earliest epoch.
TransitionInfo detect_transition(const std::vector<TrainRunRecord>& records,
                                 CvColumn column,
                                 double acc_threshold = 0.95,
                                 int smooth_window = 5,
                                 double memorization_threshold = 0.99);

struct SeedAggregate {
  double cv_peak_mean = 0.0;
  double cv_peak_std = 0.0;       // n-1 denominator
  double precedence_fraction = 0.0;
  int n_seeds = 0;
};

// Mean/std of cv_peak_value plus the fraction of runs whose peak preceded
// generalization. Requires at least two summaries.
SeedAggregate aggregate_seeds(const std::vector<RunSummary>& summaries);

// ---- run-directory persistence ----
// Layout: manifest.json (written by the caller before the run), metrics.csv
// (schema grok-metrics-v1), summary.json (schema grok-summary-v1).

inline constexpr const char* kMetricsSchema = "grok-metrics-v1";
inline constexpr const char* kSummarySchema = "grok-summary-v1";

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<TrainRunRecord>& records);
std::vector<TrainRunRecord> read_metrics_csv(const std::filesystem::path& path);

void write_summary_json(const std::filesystem::path& path,
                        const RunSummary& summary);
RunSummary read_summary_json(const std::filesystem::path& path);

}  // namespace thermo::grokking

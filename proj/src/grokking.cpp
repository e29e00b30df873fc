#include "attnthermo/grokking.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "attnthermo/equilibrium.hpp"
#include "attnthermo/util/csv.hpp"
#include "attnthermo/util/numerics.hpp"
#include "attnthermo/util/rng.hpp"

namespace thermo::grokking {

bool is_prime(std::int64_t n) {
  if (n < 2) return false;
  if (n < 4) return true;
  if (n % 2 == 0) return false;
  for (std::int64_t d = 3; d * d <= n; d += 2)
    if (n % d == 0) return false;
  return true;
}

std::string cv_column_name(CvColumn c) {
  return c == CvColumn::Weighted ? "cv_weighted" : "cv_unweighted";
}

CvColumn parse_cv_column(const std::string& name) {
  if (name == "cv_weighted" || name == "weighted") return CvColumn::Weighted;
  if (name == "cv_unweighted" || name == "unweighted")
    return CvColumn::Unweighted;
  throw std::invalid_argument("unknown cv column: " + name);
}

ModAddDataset generate_dataset(std::int64_t p, std::uint64_t split_seed,
                               double train_fraction) {
  if (p < 3 || p > 10007)
    throw std::invalid_argument("generate_dataset: p must be in [3, 10007]");
  if (!is_prime(p))
    throw std::invalid_argument("generate_dataset: p = " + std::to_string(p) +
                                " is not prime");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("generate_dataset: train_fraction in (0,1)");

  ModAddDataset ds;
  ds.p = p;
  ds.split_seed = split_seed;
  ds.train_fraction = train_fraction;
  std::vector<Example> all;
  all.reserve(static_cast<std::size_t>(p * p));
  for (std::int64_t a = 0; a < p; ++a)
    for (std::int64_t b = 0; b < p; ++b)
      all.push_back({a, b, (a + b) % p});
  util::Rng rng(util::Rng::substream(split_seed, 0x5117));
  rng.shuffle(all);
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(p * p) * train_fraction));
  ds.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
  ds.val.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
  return ds;
}

namespace {

struct Batch {
  std::vector<std::int64_t> tokens;  // [n, 3] flattened
  std::vector<std::int64_t> targets;
};

Batch make_batch(const std::vector<Example>& examples,
                 const std::vector<std::size_t>& idx, std::size_t lo,
                 std::size_t hi, std::int64_t eq_token) {
  Batch b;
  b.tokens.reserve((hi - lo) * 3);
  b.targets.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) {
    const Example& ex = examples[idx[i]];
    b.tokens.push_back(ex.a);
    b.tokens.push_back(ex.b);
    b.tokens.push_back(eq_token);
    b.targets.push_back(ex.label);
  }
  return b;
}

struct EvalMetrics {
  double loss = 0.0;
  double acc = 0.0;
  std::int64_t correct = 0;
};

// Loss/accuracy of the final-position logits against the targets.
EvalMetrics metrics_from_logits(const nn::Tensor& logits,
                                const std::vector<std::int64_t>& targets) {
  const std::int64_t B = logits.dim(0), T = logits.dim(1), V = logits.dim(2);
  EvalMetrics m;
  for (std::int64_t b = 0; b < B; ++b) {
    const double* row = logits.data.data() + ((b * T) + (T - 1)) * V;
    double mx = row[0];
    std::int64_t arg = 0;
    for (std::int64_t j = 1; j < V; ++j)
      if (row[j] > mx) {
        mx = row[j];
        arg = j;
      }
    double z = 0.0;
    for (std::int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
    m.loss += mx + std::log(z) - row[targets[static_cast<std::size_t>(b)]];
    if (arg == targets[static_cast<std::size_t>(b)]) ++m.correct;
  }
  m.loss /= static_cast<double>(B);
  m.acc = static_cast<double>(m.correct) / static_cast<double>(B);
  return m;
}

}  // namespace

ExperimentResult run_experiment(std::int64_t p,
                                const nn::TransformerConfig& model_cfg,
                                const nn::OptimizerConfig& opt_cfg,
                                const TrainSchedule& schedule,
                                std::uint64_t seed, CvColumn cv_column,
                                const ProgressFn& progress,
                                nn::Transformer* final_model_out) {
  if (schedule.max_epochs < 1)
    throw std::invalid_argument("run_experiment: max_epochs < 1");
  if (schedule.eval_every < 1)
    throw std::invalid_argument("run_experiment: eval_every < 1");

  ModAddDataset ds = generate_dataset(p, seed);
  nn::TransformerConfig cfg = model_cfg;
  cfg.vocab_size = p + 1;
  cfg.seq_len = 3;
  cfg.seed = seed;
  cfg.validate();
  opt_cfg.validate();

  auto model = nn::Transformer::make(cfg);
  nn::AdamW opt(opt_cfg);
  util::Rng shuffle_rng(util::Rng::substream(seed, 0x0bac4e5));

  const std::size_t n_train = ds.train.size();
  const std::size_t batch_size = std::min<std::size_t>(
      static_cast<std::size_t>(schedule.batch_size), n_train);
  const std::int64_t eq_token = p;

  // Fixed held-out probe batch for the fluctuation observables.
  const std::size_t probe_n =
      std::min<std::size_t>(static_cast<std::size_t>(schedule.probe_batch),
                            ds.val.size());
  std::vector<std::size_t> probe_idx(probe_n);
  for (std::size_t i = 0; i < probe_n; ++i) probe_idx[i] = i;
  const Batch probe = make_batch(ds.val, probe_idx, 0, probe_n, eq_token);
  const bool probe_is_full_val = probe_n == ds.val.size();

  std::vector<std::size_t> val_idx(ds.val.size());
  for (std::size_t i = 0; i < val_idx.size(); ++i) val_idx[i] = i;
  const Batch val_batch = make_batch(ds.val, val_idx, 0, ds.val.size(), eq_token);

  std::vector<std::size_t> train_order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) train_order[i] = i;
  const Batch full_train =
      make_batch(ds.train, train_order, 0, n_train, eq_token);

  ExperimentResult result;
  result.summary.p = p;
  result.summary.seed = seed;
  result.summary.cv_column = cv_column;

  // Instrumented evaluation shared by the epoch-0 row and the loop.
  auto instrument = [&](std::int64_t epoch, double train_loss,
                        double train_acc) {
    TrainRunRecord rec;
    rec.epoch = epoch;
    rec.train_loss = train_loss;
    rec.train_acc = train_acc;

    nn::Graph probe_graph(/*recording=*/false);
    auto probe_out = model.forward(probe_graph, probe.tokens,
                                   static_cast<std::int64_t>(probe_n), true);
    rec.cv_weighted = nn::attention_cv<double>(probe_out.probes, 1.0,
                                               nn::CvWeighting::RhoWeighted);
    rec.cv_unweighted = nn::attention_cv<double>(probe_out.probes, 1.0,
                                                 nn::CvWeighting::Unweighted);
    rec.attn_entropy = nn::mean_attention_entropy<double>(probe_out.probes);

    if (probe_is_full_val) {
      const auto vm =
          metrics_from_logits(probe_graph.value(probe_out.logits), probe.targets);
      rec.val_loss = vm.loss;
      rec.val_acc = vm.acc;
    } else {
      nn::Graph val_graph(false);
      auto val_out = model.forward(
          val_graph, val_batch.tokens,
          static_cast<std::int64_t>(ds.val.size()), false);
      const auto vm =
          metrics_from_logits(val_graph.value(val_out.logits), val_batch.targets);
      rec.val_loss = vm.loss;
      rec.val_acc = vm.acc;
    }

    rec.weight_norm_sq = model.weight_norm_sq(nn::WeightScope::QkProjections);
    rec.t_eff = equilibrium::effective_temperature(cfg.d_k(), rec.weight_norm_sq);
    rec.timestamp = util::timestamp_now(schedule.reproducible);
    result.records.push_back(rec);
    if (progress) progress(rec);
  };

  // Epoch 0: untrained model.
  {
    nn::Graph g(false);
    auto out = model.forward(g, full_train.tokens,
                             static_cast<std::int64_t>(n_train), false);
    const auto tm = metrics_from_logits(g.value(out.logits), full_train.targets);
    instrument(0, tm.loss, tm.acc);
  }

  std::int64_t at_threshold_since = -1;
  for (std::int64_t epoch = 1; epoch <= schedule.max_epochs; ++epoch) {
    shuffle_rng.shuffle(train_order);
    double epoch_loss = 0.0;
    std::int64_t epoch_correct = 0;
    bool diverged = false;
    for (std::size_t lo = 0; lo < n_train; lo += batch_size) {
      const std::size_t hi = std::min(lo + batch_size, n_train);
      const Batch batch = make_batch(ds.train, train_order, lo, hi, eq_token);
      nn::Graph g;
      auto out = model.forward(g, batch.tokens,
                               static_cast<std::int64_t>(hi - lo), false);
      auto last = g.select_position(out.logits, 2);
      auto loss = g.cross_entropy_mean(last, batch.targets);
      const double loss_val = g.value(loss).data[0];
      if (!std::isfinite(loss_val)) {
        diverged = true;
        break;
      }
      const auto bm = metrics_from_logits(g.value(out.logits), batch.targets);
      epoch_loss += loss_val * static_cast<double>(hi - lo);
      epoch_correct += bm.correct;
      g.backward(loss);
      std::vector<nn::Tensor> grads;
      grads.reserve(out.param_vars.size());
      for (auto pv : out.param_vars) {
        const auto& gt = g.grad(pv);
        grads.push_back(gt.data.empty()
                            ? nn::Tensor::zeros_like(g.value(pv))
                            : gt);
      }
      opt.step(model.params(), grads);
    }
    if (diverged) {
      result.summary.status = "diverged";
      break;
    }
    if (epoch % schedule.eval_every == 0 || epoch == schedule.max_epochs) {
      instrument(epoch, epoch_loss / static_cast<double>(n_train),
                 static_cast<double>(epoch_correct) / static_cast<double>(n_train));
      const auto& rec = result.records.back();
      if (schedule.early_stop) {
        if (rec.val_acc >= schedule.early_stop_acc) {
          if (at_threshold_since < 0) at_threshold_since = epoch;
          if (epoch - at_threshold_since >= schedule.patience) break;
        } else {
          at_threshold_since = -1;
        }
      }
    }
  }

  if (final_model_out) *final_model_out = model;
  result.summary.epochs_run = result.records.back().epoch;
  result.summary.final_train_acc = result.records.back().train_acc;
  result.summary.final_val_acc = result.records.back().val_acc;

  const int smooth = 5;
  if (static_cast<int>(result.records.size()) >= smooth) {
    const auto info = detect_transition(result.records, cv_column, 0.95, smooth);
    result.summary.cv_peak_epoch = info.cv_peak_epoch;
    result.summary.cv_peak_value = info.cv_peak_value;
    result.summary.generalization_epoch = info.generalization_epoch;
    result.summary.memorization_epoch = info.memorization_epoch;
    result.summary.peak_precedes_generalization =
        info.generalization_epoch.has_value() &&
        info.cv_peak_epoch <= *info.generalization_epoch;
  }
  return result;
}

TransitionInfo detect_transition(const std::vector<TrainRunRecord>& records,
                                 CvColumn column, double acc_threshold,
                                 int smooth_window,
                                 double memorization_threshold) {
  if (records.empty())
    throw std::invalid_argument("detect_transition: no records");
  if (static_cast<int>(records.size()) < smooth_window)
    throw std::invalid_argument(
        "detect_transition: fewer records than smooth_window");

  std::vector<double> val_acc(records.size()), train_acc(records.size()),
      cv(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    val_acc[i] = records[i].val_acc;
    train_acc[i] = records[i].train_acc;
    cv[i] = column == CvColumn::Weighted ? records[i].cv_weighted
                                         : records[i].cv_unweighted;
  }
  const auto sm_val = util::moving_average(val_acc, smooth_window);
  const auto sm_train = util::moving_average(train_acc, smooth_window);
  const auto sm_cv = util::moving_average(cv, smooth_window);

  TransitionInfo info;
  std::optional<std::size_t> gen_index;
  for (std::size_t i = 0; i < sm_val.size(); ++i) {
    if (sm_val[i] >= acc_threshold) {
      gen_index = i;
      info.generalization_epoch = records[i].epoch;
      break;
    }
  }
  for (std::size_t i = 0; i < sm_train.size(); ++i) {
    if (sm_train[i] >= memorization_threshold) {
      info.memorization_epoch = records[i].epoch;
      break;
    }
  }

  // Peak search window: everything before generalization plus the smoothing
  // window; the whole series when generalization never happened.
  std::size_t limit = records.size();
  if (gen_index)
    limit = std::min(records.size(),
                     *gen_index + static_cast<std::size_t>(smooth_window));
  // Earliest-epoch tie break, with a relative epsilon so that the 1-ulp
  // noise the clipped moving average introduces on flat series does not
  // defeat it.
  std::size_t peak = 0;
  for (std::size_t i = 1; i < limit; ++i) {
    const double tie = 1e-12 * std::max(1.0, std::abs(sm_cv[peak]));
    if (sm_cv[i] > sm_cv[peak] + tie) peak = i;
  }
  info.cv_peak_epoch = records[peak].epoch;
  info.cv_peak_value = sm_cv[peak];
  return info;
}

SeedAggregate aggregate_seeds(const std::vector<RunSummary>& summaries) {
  if (summaries.size() < 2)
    throw std::invalid_argument("aggregate_seeds: need >= 2 summaries");
  std::vector<double> peaks;
  peaks.reserve(summaries.size());
  int preceded = 0;
  for (const auto& s : summaries) {
    peaks.push_back(s.cv_peak_value);
    if (s.peak_precedes_generalization) ++preceded;
  }
  SeedAggregate agg;
  agg.cv_peak_mean = util::mean(peaks);
  agg.cv_peak_std = util::sample_stddev(peaks);
  agg.precedence_fraction =
      static_cast<double>(preceded) / static_cast<double>(summaries.size());
  agg.n_seeds = static_cast<int>(summaries.size());
  return agg;
}

// ---- persistence ----

namespace {
const std::vector<std::string> kMetricsColumns = {
    "epoch",        "train_loss",    "val_loss",       "train_acc",
    "val_acc",      "cv_weighted",   "cv_unweighted",  "weight_norm_sq",
    "t_eff",        "attn_entropy",  "timestamp"};
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<TrainRunRecord>& records) {
  util::CsvWriter w(path, kMetricsSchema, kMetricsColumns);
  for (const auto& r : records) {
    std::vector<std::string> row = {
        std::to_string(r.epoch),
        util::CsvWriter::format_double(r.train_loss),
        util::CsvWriter::format_double(r.val_loss),
        util::CsvWriter::format_double(r.train_acc),
        util::CsvWriter::format_double(r.val_acc),
        util::CsvWriter::format_double(r.cv_weighted),
        util::CsvWriter::format_double(r.cv_unweighted),
        util::CsvWriter::format_double(r.weight_norm_sq),
        util::CsvWriter::format_double(r.t_eff),
        util::CsvWriter::format_double(r.attn_entropy),
        r.timestamp};
    w.write_row(row);
  }
}

std::vector<TrainRunRecord> read_metrics_csv(
    const std::filesystem::path& path) {
  const auto file = util::read_csv(path, kMetricsSchema);
  if (file.columns != kMetricsColumns)
    throw std::runtime_error("read_metrics_csv: unexpected columns in " +
                             path.string());
  std::vector<TrainRunRecord> out;
  out.reserve(file.rows.size());
  for (std::size_t i = 0; i < file.rows.size(); ++i) {
    TrainRunRecord r;
    r.epoch = static_cast<std::int64_t>(file.number(i, "epoch"));
    r.train_loss = file.number(i, "train_loss");
    r.val_loss = file.number(i, "val_loss");
    r.train_acc = file.number(i, "train_acc");
    r.val_acc = file.number(i, "val_acc");
    r.cv_weighted = file.number(i, "cv_weighted");
    r.cv_unweighted = file.number(i, "cv_unweighted");
    r.weight_norm_sq = file.number(i, "weight_norm_sq");
    r.t_eff = file.number(i, "t_eff");
    r.attn_entropy = file.number(i, "attn_entropy");
    r.timestamp = file.rows[i][file.column_index("timestamp")];
    out.push_back(std::move(r));
  }
  return out;
}

void write_summary_json(const std::filesystem::path& path,
                        const RunSummary& s) {
  nlohmann::json j;
  j["schema"] = kSummarySchema;
  j["p"] = s.p;
  j["seed"] = s.seed;
  j["status"] = s.status;
  j["cv_column"] = cv_column_name(s.cv_column);
  j["cv_peak_epoch"] = s.cv_peak_epoch;
  j["cv_peak_value"] = s.cv_peak_value;
  if (s.generalization_epoch)
    j["generalization_epoch"] = *s.generalization_epoch;
  else
    j["generalization_epoch"] = nullptr;
  if (s.memorization_epoch)
    j["memorization_epoch"] = *s.memorization_epoch;
  else
    j["memorization_epoch"] = nullptr;
  j["peak_precedes_generalization"] = s.peak_precedes_generalization;
  j["epochs_run"] = s.epochs_run;
  j["final_train_acc"] = s.final_train_acc;
  j["final_val_acc"] = s.final_val_acc;
  std::ofstream out(path, std::ios::trunc);
  if (!out)
    throw std::runtime_error("write_summary_json: cannot open " + path.string());
  out << j.dump(2) << "\n";
}

RunSummary read_summary_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("read_summary_json: cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  if (j.value("schema", "") != kSummarySchema)
    throw std::runtime_error("read_summary_json: schema mismatch in " +
                             path.string());
  RunSummary s;
  s.p = j.at("p").get<std::int64_t>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.status = j.value("status", "completed");
  s.cv_column = parse_cv_column(j.value("cv_column", "cv_unweighted"));
  s.cv_peak_epoch = j.at("cv_peak_epoch").get<std::int64_t>();
  s.cv_peak_value = j.at("cv_peak_value").get<double>();
  if (!j.at("generalization_epoch").is_null())
    s.generalization_epoch = j.at("generalization_epoch").get<std::int64_t>();
  if (!j.at("memorization_epoch").is_null())
    s.memorization_epoch = j.at("memorization_epoch").get<std::int64_t>();
  s.peak_precedes_generalization =
      j.value("peak_precedes_generalization", false);
  s.epochs_run = j.value("epochs_run", std::int64_t{0});
  s.final_train_acc = j.value("final_train_acc", 0.0);
  s.final_val_acc = j.value("final_val_acc", 0.0);
  return s;
}

}  // namespace thermo::grokking

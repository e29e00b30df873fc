#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>
#include <vector>

#include "attnthermo/grokking.hpp"

using namespace thermo;
using grokking::CvColumn;
using grokking::ModAddDataset;
using grokking::RunSummary;
using grokking::TrainRunRecord;
using grokking::TrainSchedule;

namespace {

nn::TransformerConfig tiny_model() {
  nn::TransformerConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  return cfg;  // vocab/seq_len filled in by the harness
}

std::vector<TrainRunRecord> synthetic_records(
    const std::vector<double>& val_acc, const std::vector<double>& cv) {
  std::vector<TrainRunRecord> out(val_acc.size());
  for (std::size_t i = 0; i < val_acc.size(); ++i) {
    out[i].epoch = static_cast<std::int64_t>(i);
    out[i].val_acc = val_acc[i];
    out[i].train_acc = val_acc[i];
    out[i].cv_weighted = cv[i];
    out[i].cv_unweighted = cv[i];
  }
  return out;
}

}  // namespace

TEST_CASE("primality") {
  CHECK(grokking::is_prime(2));
  CHECK(grokking::is_prime(19));
  CHECK(grokking::is_prime(113));
  CHECK(grokking::is_prime(10007));
  CHECK(!grokking::is_prime(1));
  CHECK(!grokking::is_prime(4));
  CHECK(!grokking::is_prime(91));  // 7 * 13
}

TEST_CASE("dataset: exhaustive enumeration and exact split sizes") {
  const auto d3 = grokking::generate_dataset(3, 0);
  CHECK(d3.train.size() + d3.val.size() == 9);
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  auto check_all = [&](const std::vector<grokking::Example>& v) {
    for (const auto& ex : v) {
      CHECK(ex.label == (ex.a + ex.b) % 3);
      CHECK(seen.insert({ex.a, ex.b}).second);  // disjoint, no duplicates
    }
  };
  check_all(d3.train);
  check_all(d3.val);
  CHECK(seen.size() == 9);

  const auto d19 = grokking::generate_dataset(19, 7);
  CHECK(d19.train.size() == 180);
  CHECK(d19.val.size() == 181);

  CHECK_THROWS_AS(grokking::generate_dataset(4, 0), std::invalid_argument);
  CHECK_THROWS_AS(grokking::generate_dataset(10009, 0), std::invalid_argument);
}

TEST_CASE("dataset: split is reproducible in the seed") {
  const auto a = grokking::generate_dataset(11, 42);
  const auto b = grokking::generate_dataset(11, 42);
  REQUIRE(a.train.size() == b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].a == b.train[i].a);
    CHECK(a.train[i].b == b.train[i].b);
  }
  const auto c = grokking::generate_dataset(11, 43);
  bool differs = false;
  for (std::size_t i = 0; i < a.train.size(); ++i)
    differs = differs || a.train[i].a != c.train[i].a ||
              a.train[i].b != c.train[i].b;
  CHECK(differs);
}

TEST_CASE("detect_transition on synthetic series") {
  // hard 0.2 -> 1.0 step at epoch 10: a centered window of 5 first clears
  // the 0.95 threshold once the whole window sits past the step, at 12
  std::vector<double> acc(21), cv(21);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    acc[i] = i < 10 ? 0.2 : 1.0;
    cv[i] = i <= 5 ? static_cast<double>(i) : std::max(0.0, 10.0 - static_cast<double>(i));
  }
  const auto recs = synthetic_records(acc, cv);
  const auto info = grokking::detect_transition(recs, CvColumn::Unweighted);
  REQUIRE(info.generalization_epoch.has_value());
  CHECK(*info.generalization_epoch == 12);
  CHECK(info.cv_peak_epoch == 5);

  // gradual monotone series crossing 0.95 at epoch 38: smoothing is
  // alignment-free for a linear ramp, so the detected epoch matches
  std::vector<double> ramp(41), rampcv(41, 0.0);
  for (std::size_t i = 0; i < ramp.size(); ++i)
    ramp[i] = static_cast<double>(i) / 40.0;
  const auto ramp_info = grokking::detect_transition(
      synthetic_records(ramp, rampcv), CvColumn::Unweighted);
  REQUIRE(ramp_info.generalization_epoch.has_value());
  CHECK(*ramp_info.generalization_epoch == 38);

  // flat cv: tie broken to the earliest epoch
  std::vector<double> flat(21, 0.7);
  const auto flat_info = grokking::detect_transition(
      synthetic_records(acc, flat), CvColumn::Unweighted);
  CHECK(flat_info.cv_peak_epoch == 0);

  // never generalizes: global argmax over the whole series
  std::vector<double> low(21, 0.3);
  std::vector<double> late(21);
  for (std::size_t i = 0; i < late.size(); ++i)
    late[i] = std::max(0.0, 8.0 - std::abs(static_cast<double>(i) - 15.0));
  const auto never = grokking::detect_transition(
      synthetic_records(low, late), CvColumn::Unweighted);
  CHECK(!never.generalization_epoch.has_value());
  CHECK(never.cv_peak_epoch == 15);

  CHECK_THROWS_AS(grokking::detect_transition(
                      synthetic_records({0.1, 0.2}, {0.0, 0.0}),
                      CvColumn::Unweighted),
                  std::invalid_argument);
}

TEST_CASE("aggregate_seeds statistics") {
  RunSummary a;
  a.cv_peak_value = 1.0;
  a.peak_precedes_generalization = true;
  RunSummary b = a;
  b.cv_peak_value = 2.0;
  RunSummary c = a;
  c.cv_peak_value = 3.0;
  c.peak_precedes_generalization = false;
  const auto agg = grokking::aggregate_seeds({a, b, c});
  CHECK(agg.cv_peak_mean == doctest::Approx(2.0));
  CHECK(agg.cv_peak_std == doctest::Approx(1.0));
  CHECK(agg.precedence_fraction == doctest::Approx(2.0 / 3.0));

  const auto same = grokking::aggregate_seeds({a, a});
  CHECK(same.cv_peak_std == doctest::Approx(0.0));
  CHECK(same.precedence_fraction == doctest::Approx(1.0));

  CHECK_THROWS_AS(grokking::aggregate_seeds({a}), std::invalid_argument);

  RunSummary d = a;
  d.peak_precedes_generalization = true;
  RunSummary e = a;
  e.peak_precedes_generalization = false;
  const auto five = grokking::aggregate_seeds({a, b, c, d, e});
  CHECK(five.precedence_fraction == doctest::Approx(0.6));
}

TEST_CASE("run_experiment: records are well-formed and deterministic") {
  TrainSchedule sched;
  sched.max_epochs = 30;
  sched.eval_every = 1;
  sched.early_stop = false;
  sched.reproducible = true;
  const auto res = grokking::run_experiment(5, tiny_model(),
                                            nn::OptimizerConfig{}, sched, 1);
  REQUIRE(res.records.size() == 31);  // epoch 0 plus 30 epochs
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& r = res.records[i];
    CHECK(r.epoch == static_cast<std::int64_t>(i));
    CHECK(r.train_acc >= 0.0);
    CHECK(r.train_acc <= 1.0);
    CHECK(r.val_acc >= 0.0);
    CHECK(r.val_acc <= 1.0);
    CHECK(r.cv_weighted >= 0.0);
    CHECK(r.cv_unweighted >= 0.0);
    CHECK(r.weight_norm_sq > 0.0);
    CHECK(r.attn_entropy >= 0.0);
    CHECK(r.attn_entropy <= std::log(3.0) + 1e-12);
    CHECK(std::isfinite(r.train_loss));
    CHECK(std::isfinite(r.val_loss));
  }
  // t_eff is the exact algebraic inverse of the weight norm
  for (std::size_t i = 1; i < res.records.size(); ++i) {
    const auto& prev = res.records[i - 1];
    const auto& cur = res.records[i];
    if (cur.weight_norm_sq > prev.weight_norm_sq)
      CHECK(cur.t_eff < prev.t_eff);
    if (cur.weight_norm_sq < prev.weight_norm_sq)
      CHECK(cur.t_eff > prev.t_eff);
    CHECK(cur.t_eff == doctest::Approx(std::sqrt(16.0) / cur.weight_norm_sq)
                           .epsilon(1e-12));
  }

  // bit-for-bit reproducibility
  const auto res2 = grokking::run_experiment(5, tiny_model(),
                                             nn::OptimizerConfig{}, sched, 1);
  REQUIRE(res2.records.size() == res.records.size());
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    CHECK(res.records[i].train_loss == res2.records[i].train_loss);
    CHECK(res.records[i].val_loss == res2.records[i].val_loss);
    CHECK(res.records[i].cv_weighted == res2.records[i].cv_weighted);
    CHECK(res.records[i].cv_unweighted == res2.records[i].cv_unweighted);
    CHECK(res.records[i].weight_norm_sq == res2.records[i].weight_norm_sq);
  }

  // a different seed trains differently
  const auto res3 = grokking::run_experiment(5, tiny_model(),
                                             nn::OptimizerConfig{}, sched, 2);
  bool differs = false;
  for (std::size_t i = 0; i < res.records.size(); ++i)
    differs = differs || res.records[i].train_loss != res3.records[i].train_loss;
  CHECK(differs);
}

TEST_CASE("epoch-0 validation accuracy sits at chance level") {
  TrainSchedule sched;
  sched.max_epochs = 1;
  sched.early_stop = false;
  sched.reproducible = true;
  nn::TransformerConfig cfg = tiny_model();
  cfg.d_model = 64;
  cfg.n_heads = 4;
  const auto res =
      grokking::run_experiment(19, cfg, nn::OptimizerConfig{}, sched, 3);
  const double chance = 1.0 / 19.0;
  const double band = 5.0 / std::sqrt(19.0 * 19.0 / 2.0);
  CHECK(res.records.front().val_acc <= chance + band);
}

TEST_CASE("training makes progress on a tiny modulus") {
  TrainSchedule sched;
  sched.max_epochs = 400;
  sched.early_stop = false;
  sched.reproducible = true;
  nn::OptimizerConfig opt;
  opt.learning_rate = 1e-3;
  opt.weight_decay = 0.01;
  const auto res = grokking::run_experiment(5, tiny_model(), opt, sched, 0);
  CHECK(res.summary.status == "completed");
  CHECK(res.records.back().train_loss < res.records.front().train_loss);
  CHECK(res.records.back().train_acc >= 0.9);  // 12 examples memorized
}

TEST_CASE("metrics csv and summary json round-trip") {
  TrainSchedule sched;
  sched.max_epochs = 6;
  sched.early_stop = false;
  sched.reproducible = true;
  const auto res = grokking::run_experiment(5, tiny_model(),
                                            nn::OptimizerConfig{}, sched, 4);
  const auto dir = std::filesystem::temp_directory_path() / "attnthermo_grok_test";
  std::filesystem::create_directories(dir);
  grokking::write_metrics_csv(dir / "metrics.csv", res.records);
  const auto back = grokking::read_metrics_csv(dir / "metrics.csv");
  REQUIRE(back.size() == res.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].epoch == res.records[i].epoch);
    CHECK(back[i].train_loss == res.records[i].train_loss);
    CHECK(back[i].cv_weighted == res.records[i].cv_weighted);
    CHECK(back[i].t_eff == res.records[i].t_eff);
  }
  grokking::write_summary_json(dir / "summary.json", res.summary);
  const auto s = grokking::read_summary_json(dir / "summary.json");
  CHECK(s.p == res.summary.p);
  CHECK(s.seed == res.summary.seed);
  CHECK(s.cv_peak_epoch == res.summary.cv_peak_epoch);
  CHECK(s.cv_peak_value == res.summary.cv_peak_value);
  CHECK(s.peak_precedes_generalization ==
        res.summary.peak_precedes_generalization);
  std::filesystem::remove_all(dir);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "attnthermo/equilibrium.hpp"
#include "attnthermo/nn/checkpoint.hpp"
#include "attnthermo/nn/transformer.hpp"
#include "attnthermo/util/rng.hpp"

using namespace thermo;
using nn::Graph;
using nn::Tensor;
using nn::Transformer;
using nn::TransformerConfig;

namespace {

TransformerConfig small_config() {
  TransformerConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.vocab_size = 11;
  cfg.seq_len = 3;
  cfg.seed = 42;
  return cfg;
}

std::vector<std::int64_t> random_tokens(std::int64_t batch, std::int64_t T,
                                        std::int64_t vocab, util::Rng& rng) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(batch * T));
  for (auto& t : out)
    t = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(vocab)));
  return out;
}

}  // namespace

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.d_model = 15;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.vocab_size = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK_THROWS_AS(nn::parse_weight_scope("everything"), std::invalid_argument);
}

TEST_CASE("single-token sequence attends only to itself") {
  auto cfg = small_config();
  cfg.seq_len = 1;
  auto model = Transformer::make(cfg);
  Graph g;
  const std::vector<std::int64_t> tokens = {3, 7};  // batch of 2, T = 1
  auto out = model.forward(g, tokens, 2, true);
  REQUIRE(out.probes.size() ==
          static_cast<std::size_t>(cfg.n_layers * cfg.n_heads));
  for (const auto& probe : out.probes) {
    for (double v : probe.probs.data) CHECK(v == doctest::Approx(1.0));
  }
}

TEST_CASE("zeroed query projections give uniform attention rows") {
  auto cfg = small_config();
  auto model = Transformer::make(cfg);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    if (model.param_names()[i].find("attn.wq") != std::string::npos)
      for (auto& v : model.params()[i].data) v = 0.0;
  }
  Graph g;
  util::Rng rng(1);
  const auto tokens = random_tokens(3, 3, cfg.vocab_size, rng);
  auto out = model.forward(g, tokens, 3, true);
  for (const auto& probe : out.probes) {
    const std::int64_t B = probe.probs.dim(0), T = probe.probs.dim(1);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t j = 0; j <= t; ++j)
          CHECK(probe.probs.data[(b * T + t) * T + j] ==
                doctest::Approx(1.0 / static_cast<double>(t + 1)).epsilon(1e-12));
  }
}

TEST_CASE("probe rows are stochastic on random inputs") {
  auto cfg = small_config();
  auto model = Transformer::make(cfg);
  util::Rng rng(5);
  Graph g;
  const auto tokens = random_tokens(4, 3, cfg.vocab_size, rng);
  auto out = model.forward(g, tokens, 4, true);
  REQUIRE(!out.probes.empty());
  for (const auto& probe : out.probes) {
    const std::int64_t B = probe.probs.dim(0), T = probe.probs.dim(1);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t) {
        double s = 0.0;
        for (std::int64_t j = 0; j < T; ++j)
          s += probe.probs.data[(b * T + t) * T + j];
        CHECK(std::abs(s - 1.0) < 1e-6);
      }
  }
  // out-of-range token rejected
  std::vector<std::int64_t> bad = {0, 1, static_cast<std::int64_t>(cfg.vocab_size)};
  CHECK_THROWS_AS(model.forward(g, bad, 1, false), std::invalid_argument);
}

TEST_CASE("forward is deterministic and the full pipeline differentiates") {
  auto cfg = small_config();
  auto model = Transformer::make(cfg);
  util::Rng rng(7);
  const auto tokens = random_tokens(4, 3, cfg.vocab_size, rng);
  const std::vector<std::int64_t> targets = {1, 2, 3, 4};

  auto run_once = [&](std::vector<double>& grads_flat) {
    Graph g;
    auto out = model.forward(g, tokens, 4, false);
    auto loss = g.cross_entropy_mean(g.select_position(out.logits, 2), targets);
    g.backward(loss);
    grads_flat.clear();
    for (auto pv : out.param_vars)
      for (double v : g.grad(pv).data) grads_flat.push_back(v);
    return g.value(loss).data[0];
  };
  std::vector<double> ga, gb;
  const double la = run_once(ga);
  const double lb = run_once(gb);
  CHECK(la == lb);
  REQUIRE(ga.size() == gb.size());
  for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == gb[i]);
  CHECK(std::isfinite(la));
  double gnorm = 0.0;
  for (double v : ga) gnorm += v * v;
  CHECK(gnorm > 0.0);
}

TEST_CASE("rope-enabled forward works and differs from absolute embeddings") {
  auto cfg = small_config();
  cfg.use_rope = true;
  auto model = Transformer::make(cfg);
  util::Rng rng(9);
  const auto tokens = random_tokens(2, 3, cfg.vocab_size, rng);
  Graph g;
  auto out = model.forward(g, tokens, 2, true);
  CHECK(g.value(out.logits).dim(2) == cfg.vocab_size);
  for (double v : g.value(out.logits).data) CHECK(std::isfinite(v));
}

TEST_CASE("weight_norm_sq scopes") {
  auto cfg = small_config();
  auto model = Transformer::make(cfg);
  // zero everything, then plant an identity in wq of layer 0
  for (auto& p : model.params())
    for (auto& v : p.data) v = 0.0;
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    if (model.param_names()[i] == "layers.0.attn.wq") {
      auto& t = model.params()[i];
      t.data[0] = 1.0;
      t.data[static_cast<std::size_t>(cfg.d_model + 1)] = 1.0;  // [1][1]
    }
  }
  CHECK(model.weight_norm_sq(nn::WeightScope::QkProjections) ==
        doctest::Approx(2.0));
  CHECK(model.weight_norm_sq(nn::WeightScope::AllAttention) ==
        doctest::Approx(2.0));
  CHECK(model.weight_norm_sq(nn::WeightScope::AllParameters) ==
        doctest::Approx(2.0));

  // scaling scoped weights by c multiplies the norm by c^2
  auto fresh = Transformer::make(cfg);
  const double before = fresh.weight_norm_sq(nn::WeightScope::AllParameters);
  for (auto& p : fresh.params())
    for (auto& v : p.data) v *= 3.0;
  CHECK(fresh.weight_norm_sq(nn::WeightScope::AllParameters) ==
        doctest::Approx(9.0 * before).epsilon(1e-12));
}

TEST_CASE("attention_cv closed forms and prefactor") {
  // Single row with scaled logits [0, -ln 2] at T = 1: the two-level system
  // from the equilibrium module, rho = [2/3, 1/3], cv = 2 ln2^2 / 9.
  nn::AttentionProbe probe;
  probe.layer_index = 0;
  probe.head_index = 0;
  const std::int64_t T = 2;
  probe.logits_scaled = Tensor({1, T, T});
  probe.probs = Tensor({1, T, T});
  const double ln2 = std::log(2.0);
  // row 0: single entry (contributes zero in weighted mode)
  probe.logits_scaled.data = {0.0, 0.0, 0.0, -ln2};
  // probs: row 0 = [1, 0]; row 1 = softmax([0, -ln2]) = [2/3, 1/3]
  probe.probs.data = {1.0, 0.0, 2.0 / 3.0, 1.0 / 3.0};
  std::vector<nn::AttentionProbe> probes = {probe};

  const double expected_row = 2.0 * ln2 * ln2 / 9.0;
  // average over 2 rows: row 0 contributes 0
  CHECK(nn::attention_cv<double>(probes, 1.0, nn::CvWeighting::RhoWeighted) ==
        doctest::Approx(expected_row / 2.0).epsilon(1e-12));
  // pure 1/T^2 prefactor at frozen probs
  CHECK(nn::attention_cv<double>(probes, 2.0, nn::CvWeighting::RhoWeighted) ==
        doctest::Approx(expected_row / 8.0).epsilon(1e-12));
  // unweighted: only row 1 usable; population variance of {0, -ln2}
  const double var = ln2 * ln2 / 4.0;
  CHECK(nn::attention_cv<double>(probes, 1.0, nn::CvWeighting::Unweighted) ==
        doctest::Approx(var).epsilon(1e-12));

  // all logits equal -> zero in both modes
  nn::AttentionProbe flat = probe;
  flat.logits_scaled.data = {0.3, 0.0, 0.3, 0.3};
  flat.probs.data = {1.0, 0.0, 0.5, 0.5};
  std::vector<nn::AttentionProbe> fp = {flat};
  CHECK(nn::attention_cv<double>(fp, 1.0, nn::CvWeighting::RhoWeighted) ==
        doctest::Approx(0.0));
  CHECK(nn::attention_cv<double>(fp, 1.0, nn::CvWeighting::Unweighted) ==
        doctest::Approx(0.0));

  // T = 1 sequences have no usable unweighted row
  nn::AttentionProbe one;
  one.logits_scaled = Tensor({1, 1, 1});
  one.probs = Tensor::full({1, 1, 1}, 1.0);
  std::vector<nn::AttentionProbe> op = {one};
  CHECK_THROWS_AS(nn::attention_cv<double>(op, 1.0, nn::CvWeighting::Unweighted),
                  std::invalid_argument);
}

TEST_CASE("attention_cv rho-weighted equals the equilibrium Cv kernel") {
  // Shared-oracle check: same (energies, T) through both modules.
  util::Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t L = 2 + static_cast<std::int64_t>(rng.below(6));
    std::vector<double> energies(static_cast<std::size_t>(L));
    for (auto& e : energies) e = rng.gauss(0.0, 1.5);
    const double T = 0.5 + rng.uniform01() * 3.0;

    const auto eq = equilibrium::softmax_equilibrium(
        equilibrium::EnergyVector(energies), T);
    const auto obs = equilibrium::observables(eq, 1);

    // Build a probe whose last row carries scaled logits = -E/T with rho the
    // matching softmax; earlier rows are padded as single-entry rows.
    nn::AttentionProbe probe;
    probe.logits_scaled = Tensor({1, L, L});
    probe.probs = Tensor({1, L, L});
    for (std::int64_t t = 0; t < L; ++t) probe.probs.data[(t * L) + 0] = 1.0;
    for (std::int64_t j = 0; j < L; ++j) {
      probe.logits_scaled.data[(L - 1) * L + j] =
          -energies[static_cast<std::size_t>(j)] / T;
      probe.probs.data[(L - 1) * L + j] = eq.rho[static_cast<std::size_t>(j)];
    }
    probe.probs.data[(L - 1) * L + 0] = eq.rho[0];
    std::vector<nn::AttentionProbe> probes = {probe};
    // The probe stores -E/T as logits; energies seen by attention_cv are
    // E/T, so at temperature 1 the row cv is Var(E)/T^2 = obs.Cv.
    const double cv =
        nn::attention_cv<double>(probes, 1.0, nn::CvWeighting::RhoWeighted);
    const double row_cv = cv * static_cast<double>(L);  // undo row averaging
    CHECK(row_cv == doctest::Approx(obs.Cv).epsilon(1e-12));
  }
}

TEST_CASE("checkpoint round trip") {
  const auto cfg = small_config();
  auto model = Transformer::make(cfg);
  const auto path = std::filesystem::temp_directory_path() /
                    "attnthermo_ckpt_test.bin";
  nn::save_checkpoint(path, model);
  const auto loaded = nn::load_checkpoint(path);
  CHECK(loaded.config().d_model == cfg.d_model);
  CHECK(loaded.config().seed == cfg.seed);
  REQUIRE(loaded.params().size() == model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    REQUIRE(loaded.params()[i].shape == model.params()[i].shape);
    for (std::size_t j = 0; j < model.params()[i].data.size(); ++j)
      CHECK(loaded.params()[i].data[j] == model.params()[i].data[j]);
  }
  // corrupt magic is rejected
  {
    std::ofstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  CHECK_THROWS_AS(nn::load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

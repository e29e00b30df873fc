#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "attnthermo/nn/graph.hpp"
#include "attnthermo/rope.hpp"
#include "attnthermo/util/rng.hpp"

using namespace thermo;
using nn::Graph;
using nn::Tensor;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, util::Rng& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data) v = rng.gauss(0.0, scale);
  return t;
}

// Central finite-difference check of d(scalar)/d(input) for a graph builder
// f: (graph, leaf) -> scalar Var. Relative error measured against the
// analytic gradient, with an absolute floor for entries near zero.
void check_gradient(const Tensor& x0,
                    const std::function<Graph::Var(Graph&, Graph::Var)>& f,
                    double rel_tol = 1e-4, double h = 1e-5) {
  Graph g;
  auto x = g.leaf(x0, true);
  auto loss = f(g, x);
  REQUIRE(g.value(loss).numel() == 1);
  g.backward(loss);
  const Tensor analytic = g.grad(x);

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x0.data.size(); ++i) {
    Tensor xp = x0, xm = x0;
    xp.data[i] += h;
    xm.data[i] -= h;
    Graph gp, gm;
    const double fp = gp.value(f(gp, gp.leaf(xp, false))).data[0];
    const double fm = gm.value(f(gm, gm.leaf(xm, false))).data[0];
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(analytic.data[i]), 1e-6});
    max_rel = std::max(max_rel, std::abs(fd - analytic.data[i]) / denom);
  }
  CHECK(max_rel < rel_tol);
}

// Random fixed weights turn any tensor-valued op into a scalar so every
// output entry contributes to the gradient.
Tensor probe_weights(const std::vector<std::int64_t>& shape, util::Rng& rng) {
  Tensor w(shape);
  for (auto& v : w.data) v = rng.gauss(0.0, 1.0);
  return w;
}

}  // namespace

TEST_CASE("sum of squares gradient is 2x") {
  util::Rng rng(1);
  const auto x0 = random_tensor({3, 4}, rng);
  Graph g;
  auto x = g.leaf(x0, true);
  g.backward(g.sum_squares(x));
  for (std::size_t i = 0; i < x0.data.size(); ++i)
    CHECK(g.grad(x).data[i] == doctest::Approx(2.0 * x0.data[i]).epsilon(1e-12));
}

TEST_CASE("zero upstream contribution gives zero parameter gradient") {
  util::Rng rng(2);
  const auto x0 = random_tensor({4, 4}, rng);
  Graph g;
  auto x = g.leaf(x0, true);
  auto w = g.weighted_sum(x, Tensor::zeros({4, 4}));
  g.backward(w);
  for (double v : g.grad(x).data) CHECK(v == 0.0);
}

TEST_CASE("matmul gradient vs finite differences (both operands)") {
  util::Rng rng(3);
  const std::vector<std::vector<std::int64_t>> shapes = {
      {2, 3}, {5, 4}, {1, 7}, {3, 3}, {6, 2}};
  for (const auto& s : shapes) {
    const std::int64_t K = s[1], N = 1 + static_cast<std::int64_t>(rng.below(5));
    const auto a0 = random_tensor(s, rng);
    const auto w0 = random_tensor({K, N}, rng);
    const auto pw = probe_weights({s[0], N}, rng);
    check_gradient(a0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.matmul(x, g.leaf(w0, false)), pw);
    });
    check_gradient(w0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.matmul(g.leaf(a0, false), x), pw);
    });
  }
  // folded leading dims
  const auto a3 = random_tensor({2, 3, 4}, rng);
  const auto w0 = random_tensor({4, 5}, rng);
  const auto pw = probe_weights({2, 3, 5}, rng);
  check_gradient(a3, [&](Graph& g, Graph::Var x) {
    return g.weighted_sum(g.matmul(x, g.leaf(w0, false)), pw);
  });
}

TEST_CASE("bmm gradients, both layouts") {
  util::Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t M = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t K = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t N = 1 + static_cast<std::int64_t>(rng.below(4));
    const auto a0 = random_tensor({B, M, K}, rng);
    const auto bn = random_tensor({B, K, N}, rng);
    const auto bt = random_tensor({B, N, K}, rng);
    const auto pw = probe_weights({B, M, N}, rng);
    check_gradient(a0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.bmm(x, g.leaf(bn, false), false), pw);
    });
    check_gradient(bn, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.bmm(g.leaf(a0, false), x, false), pw);
    });
    check_gradient(a0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.bmm(x, g.leaf(bt, false), true), pw);
    });
    check_gradient(bt, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.bmm(g.leaf(a0, false), x, true), pw);
    });
  }
}

TEST_CASE("elementwise and broadcast op gradients") {
  util::Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t T = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t D = 1 + static_cast<std::int64_t>(rng.below(6));
    const auto x0 = random_tensor({B, T, D}, rng);
    const auto y0 = random_tensor({B, T, D}, rng);
    const auto p0 = random_tensor({T, D}, rng);
    const auto pw = probe_weights({B, T, D}, rng);
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.add(x, g.leaf(y0, false)), pw);
    });
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.add_position(x, g.leaf(p0, false)), pw);
    });
    check_gradient(p0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.add_position(g.leaf(x0, false), x), pw);
    });
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.scale(x, -1.7), pw);
    });
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.gelu(x), pw);
    });
  }
}

TEST_CASE("layer norm gradients: input, gamma, beta") {
  util::Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t R = 1 + static_cast<std::int64_t>(rng.below(5));
    const std::int64_t D = 2 + static_cast<std::int64_t>(rng.below(6));
    const auto x0 = random_tensor({R, D}, rng);
    auto g0 = random_tensor({D}, rng, 0.5);
    for (auto& v : g0.data) v += 1.0;
    const auto b0 = random_tensor({D}, rng, 0.5);
    const auto pw = probe_weights({R, D}, rng);
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(
          g.layer_norm(x, g.leaf(g0, false), g.leaf(b0, false)), pw);
    });
    check_gradient(g0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(
          g.layer_norm(g.leaf(x0, false), x, g.leaf(b0, false)), pw);
    });
    check_gradient(b0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(
          g.layer_norm(g.leaf(x0, false), g.leaf(g0, false), x), pw);
    });
  }
}

TEST_CASE("causal softmax gradient and masking") {
  util::Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(3));
    const std::int64_t T = 2 + static_cast<std::int64_t>(rng.below(4));
    const auto s0 = random_tensor({B, T, T}, rng);
    const auto pw = probe_weights({B, T, T}, rng);
    check_gradient(s0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.causal_softmax(x), pw);
    });
    // masked entries are exactly zero and rows sum to one
    Graph g;
    auto p = g.causal_softmax(g.leaf(s0, false));
    const auto& pv = g.value(p);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t) {
        double row_sum = 0.0;
        for (std::int64_t j = 0; j < T; ++j) {
          const double v = pv.data[(b * T + t) * T + j];
          if (j > t) CHECK(v == 0.0);
          row_sum += v;
        }
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("softmax rows are shift invariant") {
  util::Rng rng(8);
  const std::int64_t T = 5;
  const auto s0 = random_tensor({1, T, T}, rng);
  Tensor shifted = s0;
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t j = 0; j < T; ++j) shifted.data[t * T + j] += 37.5;
  Graph g;
  const auto& a = g.value(g.causal_softmax(g.leaf(s0, false)));
  const auto& b = g.value(g.causal_softmax(g.leaf(shifted, false)));
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-12);
}

TEST_CASE("embedding, reshape, heads, select, rope gradients") {
  util::Rng rng(9);
  const std::int64_t V = 7, D = 8, B = 2, T = 3, H = 2;
  const std::vector<std::int64_t> ids = {0, 3, 6, 2, 2, 5};
  const auto table0 = random_tensor({V, D}, rng);
  {
    const auto pw = probe_weights({static_cast<std::int64_t>(ids.size()), D}, rng);
    check_gradient(table0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.embedding(x, ids), pw);
    });
    Graph g;
    CHECK_THROWS_AS(g.embedding(g.leaf(table0, false),
                                std::vector<std::int64_t>{7}),
                    std::invalid_argument);
  }
  const auto x0 = random_tensor({B, T, D}, rng);
  {
    const auto pw = probe_weights({B * T * D}, rng);
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.reshape(x, {B * T * D}), pw);
    });
  }
  {
    const auto pw = probe_weights({B, H, T, D / H}, rng);
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.split_heads(x, H), pw);
    });
  }
  {
    const auto h0 = random_tensor({B, H, T, D / H}, rng);
    const auto pw = probe_weights({B, T, D}, rng);
    check_gradient(h0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.merge_heads(x), pw);
    });
    // split then merge is the identity
    Graph g;
    auto round = g.merge_heads(g.split_heads(g.leaf(x0, false), H));
    for (std::size_t i = 0; i < x0.data.size(); ++i)
      CHECK(g.value(round).data[i] == x0.data[i]);
  }
  {
    const auto pw = probe_weights({B, D}, rng);
    check_gradient(x0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.select_position(x, T - 1), pw);
    });
  }
  {
    const auto theta = rope::default_theta_schedule(D / H);
    const auto h0 = random_tensor({B, H, T, D / H}, rng);
    const auto pw = probe_weights({B, H, T, D / H}, rng);
    check_gradient(h0, [&](Graph& g, Graph::Var x) {
      return g.weighted_sum(g.rope_rotate(x, theta), pw);
    });
    // forward agrees with the reference rotation, row by row
    Graph g;
    const auto& y = g.value(g.rope_rotate(g.leaf(h0, false), theta));
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t t = 0; t < T; ++t) {
          std::vector<double> row(static_cast<std::size_t>(D / H));
          for (std::int64_t k = 0; k < D / H; ++k)
            row[static_cast<std::size_t>(k)] =
                h0.data[((b * H + h) * T + t) * (D / H) + k];
          const auto ref = rope::apply_rope(row, t, theta);
          for (std::int64_t k = 0; k < D / H; ++k)
            CHECK(y.data[((b * H + h) * T + t) * (D / H) + k] ==
                  doctest::Approx(ref[static_cast<std::size_t>(k)]).epsilon(1e-12));
        }
  }
}

TEST_CASE("cross entropy: gradient matches softmax minus one-hot") {
  util::Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    const std::int64_t B = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t V = 2 + static_cast<std::int64_t>(rng.below(6));
    const auto l0 = random_tensor({B, V}, rng);
    std::vector<std::int64_t> targets(static_cast<std::size_t>(B));
    for (auto& t : targets) t = static_cast<std::int64_t>(rng.below(
        static_cast<std::uint64_t>(V)));

    check_gradient(l0, [&](Graph& g, Graph::Var x) {
      return g.cross_entropy_mean(x, targets);
    });

    // closed-form oracle
    Graph g;
    auto x = g.leaf(l0, true);
    g.backward(g.cross_entropy_mean(x, targets));
    for (std::int64_t b = 0; b < B; ++b) {
      const double* row = l0.data.data() + b * V;
      double mx = row[0];
      for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
      double z = 0.0;
      for (std::int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
      for (std::int64_t j = 0; j < V; ++j) {
        const double soft = std::exp(row[j] - mx) / z;
        const double onehot =
            j == targets[static_cast<std::size_t>(b)] ? 1.0 : 0.0;
        CHECK(g.grad(x).data[b * V + j] ==
              doctest::Approx((soft - onehot) / static_cast<double>(B))
                  .epsilon(1e-10));
      }
    }
  }
  Graph g;
  auto x = g.leaf(Tensor::zeros({2, 3}), true);
  CHECK_THROWS_AS(g.cross_entropy_mean(x, std::vector<std::int64_t>{0, 3}),
                  std::invalid_argument);
}

TEST_CASE("float instantiation runs the same ops") {
  using GraphF = nn::GraphT<float>;
  using TensorF = nn::TensorT<float>;
  util::Rng rng(11);
  TensorF x0({3, 4});
  for (auto& v : x0.data) v = static_cast<float>(rng.gauss());
  GraphF g;
  auto x = g.leaf(x0, true);
  auto loss = g.sum_squares(g.gelu(x));
  g.backward(loss);
  CHECK(std::isfinite(static_cast<double>(g.value(loss).data[0])));
  CHECK(g.grad(x).data.size() == x0.data.size());
}

TEST_CASE("backward on an evaluation-only graph is rejected") {
  Graph g(false);
  auto x = g.leaf(Tensor::zeros({2}), true);
  auto s = g.sum_squares(x);
  CHECK_THROWS_AS(g.backward(s), std::logic_error);
}

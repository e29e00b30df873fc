#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "attnthermo/nn/tensor.hpp"

namespace thermo::nn {

// Tape-based reverse-mode autodiff over dense tensors. Nodes are appended in
// forward order, so iterating ids in reverse is a valid topological order for
// the backward sweep. A graph is built per forward pass and discarded; ops
// are coarse (matmul, softmax, layer norm, ...) so tape overhead is
// negligible next to the matmuls. All reductions are sequential, which makes
// single-threaded runs bit-for-bit reproducible.
template <class Real>
class GraphT {
 public:
  struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
  };

  // recording = false skips backward-closure construction (evaluation only).
  explicit GraphT(bool recording = true) : recording_(recording) {}

  GraphT(const GraphT&) = delete;
  GraphT& operator=(const GraphT&) = delete;

  std::size_t size() const { return nodes_.size(); }

  const TensorT<Real>& value(Var v) const { return node(v).value; }

  // Gradient of the last backward() target w.r.t. this node. Empty before
  // backward() or for nodes that do not require grad.
  const TensorT<Real>& grad(Var v) const { return node(v).grad; }

  Var leaf(TensorT<Real> value, bool requires_grad = false) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && recording_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // out = a . w where a is [..., K] (leading dims folded) and w is [K, N].
  Var matmul(Var a, Var w) {
    const auto& av = value(a);
    const auto& wv = value(w);
    if (wv.rank() != 2 || av.rank() < 1 || av.dim(-1) != wv.dim(0))
      throw std::invalid_argument("matmul: shape mismatch " +
                                  TensorT<Real>::shape_string(av.shape) + " x " +
                                  TensorT<Real>::shape_string(wv.shape));
    const std::int64_t K = wv.dim(0), N = wv.dim(1);
    const std::int64_t R = av.numel() / K;
    auto out_shape = av.shape;
    out_shape.back() = N;
    TensorT<Real> out(out_shape);
    mm_nn(av.data.data(), wv.data.data(), out.data.data(), R, K, N);
    return record(std::move(out), {a, w}, [this, a, w, R, K, N](Var self) {
      const auto& g = node(self).grad;
      if (wants_grad(a)) {
        // da = g . w^T
        mm_nt(g.data.data(), value(w).data.data(), grad_mut(a), R, N, K);
      }
      if (wants_grad(w)) {
        // dw = a^T . g
        mm_tn(value(a).data.data(), g.data.data(), grad_mut(w), R, K, N);
      }
    });
  }

  // Batched matmul over identical leading dims. transpose_b selects
  // a [..., M, K] x b [..., N, K]^T; otherwise b is [..., K, N].
  Var bmm(Var a, Var b, bool transpose_b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (av.rank() < 2 || bv.rank() != av.rank())
      throw std::invalid_argument("bmm: rank mismatch");
    for (int i = 0; i + 2 < av.rank(); ++i)
      if (av.dim(i) != bv.dim(i))
        throw std::invalid_argument("bmm: leading dims differ");
    const std::int64_t M = av.dim(-2), K = av.dim(-1);
    const std::int64_t N = transpose_b ? bv.dim(-2) : bv.dim(-1);
    const std::int64_t bK = transpose_b ? bv.dim(-1) : bv.dim(-2);
    if (bK != K) throw std::invalid_argument("bmm: inner dims differ");
    std::int64_t batches = 1;
    for (int i = 0; i + 2 < av.rank(); ++i) batches *= av.dim(i);

    auto out_shape = av.shape;
    out_shape[out_shape.size() - 1] = N;
    TensorT<Real> out(out_shape);
    for (std::int64_t s = 0; s < batches; ++s) {
      const Real* ap = av.data.data() + s * M * K;
      const Real* bp = bv.data.data() + s * (transpose_b ? N * K : K * N);
      Real* cp = out.data.data() + s * M * N;
      if (transpose_b)
        mm_nt(ap, bp, cp, M, K, N);
      else
        mm_nn(ap, bp, cp, M, K, N);
    }
    return record(std::move(out), {a, b},
                  [this, a, b, transpose_b, batches, M, K, N](Var self) {
      const auto& g = node(self).grad;
      for (std::int64_t s = 0; s < batches; ++s) {
        const Real* gp = g.data.data() + s * M * N;
        const Real* ap = value(a).data.data() + s * M * K;
        const Real* bp =
            value(b).data.data() + s * (transpose_b ? N * K : K * N);
        if (wants_grad(a)) {
          Real* dap = grad_mut(a) + s * M * K;
          if (transpose_b)
            mm_nn(gp, bp, dap, M, N, K);  // da = g . b
          else
            mm_nt(gp, bp, dap, M, N, K);  // da = g . b^T
        }
        if (wants_grad(b)) {
          Real* dbp = grad_mut(b) + s * (transpose_b ? N * K : K * N);
          if (transpose_b)
            mm_tn(gp, ap, dbp, M, N, K);  // db = g^T . a
          else
            mm_tn(ap, gp, dbp, M, K, N);  // db = a^T . g
        }
      }
    });
  }

  Var add(Var a, Var b) {
    const auto& av = value(a);
    const auto& bv = value(b);
    if (!av.same_shape(bv)) throw std::invalid_argument("add: shape mismatch");
    TensorT<Real> out(av.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = av.data[i] + bv.data[i];
    return record(std::move(out), {a, b}, [this, a, b](Var self) {
      const auto& g = node(self).grad;
      if (wants_grad(a)) {
        Real* da = grad_mut(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i];
      }
      if (wants_grad(b)) {
        Real* db = grad_mut(b);
        for (std::size_t i = 0; i < g.data.size(); ++i) db[i] += g.data[i];
      }
    });
  }

  // x [B, T, D] plus the first T rows of pos [P, D] (P >= T), broadcast over
  // the batch. Used for learned absolute position embeddings.
  Var add_position(Var x, Var pos) {
    const auto& xv = value(x);
    const auto& pv = value(pos);
    if (xv.rank() != 3 || pv.rank() != 2 || xv.dim(2) != pv.dim(1) ||
        pv.dim(0) < xv.dim(1))
      throw std::invalid_argument("add_position: shape mismatch");
    const std::int64_t B = xv.dim(0), T = xv.dim(1), D = xv.dim(2);
    TensorT<Real> out(xv.shape);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t d = 0; d < D; ++d)
          out.data[(b * T + t) * D + d] =
              xv.data[(b * T + t) * D + d] + pv.data[t * D + d];
    return record(std::move(out), {x, pos}, [this, x, pos, B, T, D](Var self) {
      const auto& g = node(self).grad;
      if (wants_grad(x)) {
        Real* dx = grad_mut(x);
        for (std::size_t i = 0; i < g.data.size(); ++i) dx[i] += g.data[i];
      }
      if (wants_grad(pos)) {
        Real* dp = grad_mut(pos);
        for (std::int64_t b = 0; b < B; ++b)
          for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t d = 0; d < D; ++d)
              dp[t * D + d] += g.data[(b * T + t) * D + d];
      }
    });
  }

  Var scale(Var a, Real c) {
    const auto& av = value(a);
    TensorT<Real> out(av.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = c * av.data[i];
    return record(std::move(out), {a}, [this, a, c](Var self) {
      const auto& g = node(self).grad;
      if (wants_grad(a)) {
        Real* da = grad_mut(a);
        for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += c * g.data[i];
      }
    });
  }

  // Exact (erf) GELU.
  Var gelu(Var a) {
    const auto& av = value(a);
    TensorT<Real> out(av.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i) {
      const double x = static_cast<double>(av.data[i]);
      out.data[i] =
          static_cast<Real>(0.5 * x * (1.0 + std::erf(x * 0.7071067811865475)));
    }
    return record(std::move(out), {a}, [this, a](Var self) {
      const auto& g = node(self).grad;
      if (!wants_grad(a)) return;
      Real* da = grad_mut(a);
      const auto& av = value(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        const double x = static_cast<double>(av.data[i]);
        const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865475));
        const double pdf = 0.3989422804014327 * std::exp(-0.5 * x * x);
        da[i] += g.data[i] * static_cast<Real>(cdf + x * pdf);
      }
    });
  }

  // Layer normalization over the last dimension with affine gamma/beta.
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5) {
    const auto& xv = value(x);
    const auto& gv = value(gamma);
    const auto& bv = value(beta);
    const std::int64_t D = xv.dim(-1);
    if (gv.rank() != 1 || bv.rank() != 1 || gv.dim(0) != D || bv.dim(0) != D)
      throw std::invalid_argument("layer_norm: affine shape mismatch");
    const std::int64_t R = xv.numel() / D;
    TensorT<Real> out(xv.shape);
    TensorT<Real> xhat(xv.shape);
    std::vector<Real> inv_std(static_cast<std::size_t>(R));
    for (std::int64_t r = 0; r < R; ++r) {
      const Real* row = xv.data.data() + r * D;
      double mu = 0.0;
      for (std::int64_t d = 0; d < D; ++d) mu += row[d];
      mu /= static_cast<double>(D);
      double var = 0.0;
      for (std::int64_t d = 0; d < D; ++d) {
        const double c = row[d] - mu;
        var += c * c;
      }
      var /= static_cast<double>(D);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[static_cast<std::size_t>(r)] = static_cast<Real>(inv);
      for (std::int64_t d = 0; d < D; ++d) {
        const Real h = static_cast<Real>((row[d] - mu) * inv);
        xhat.data[r * D + d] = h;
        out.data[r * D + d] = gv.data[static_cast<std::size_t>(d)] * h +
                              bv.data[static_cast<std::size_t>(d)];
      }
    }
    return record(std::move(out), {x, gamma, beta},
                  [this, x, gamma, beta, xhat = std::move(xhat),
                   inv_std = std::move(inv_std), R, D](Var self) {
      const auto& g = node(self).grad;
      const auto& gv = value(gamma);
      for (std::int64_t r = 0; r < R; ++r) {
        const Real* grow = g.data.data() + r * D;
        const Real* hrow = xhat.data.data() + r * D;
        if (wants_grad(gamma)) {
          Real* dg = grad_mut(gamma);
          for (std::int64_t d = 0; d < D; ++d) dg[d] += grow[d] * hrow[d];
        }
        if (wants_grad(beta)) {
          Real* db = grad_mut(beta);
          for (std::int64_t d = 0; d < D; ++d) db[d] += grow[d];
        }
        if (wants_grad(x)) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::int64_t d = 0; d < D; ++d) {
            const double dh = grow[d] * gv.data[static_cast<std::size_t>(d)];
            sum_dh += dh;
            sum_dh_h += dh * hrow[d];
          }
          const double mean_dh = sum_dh / static_cast<double>(D);
          const double mean_dh_h = sum_dh_h / static_cast<double>(D);
          Real* dx = grad_mut(x) + r * D;
          const double inv = inv_std[static_cast<std::size_t>(r)];
          for (std::int64_t d = 0; d < D; ++d) {
            const double dh = grow[d] * gv.data[static_cast<std::size_t>(d)];
            dx[d] += static_cast<Real>(inv * (dh - mean_dh - hrow[d] * mean_dh_h));
          }
        }
      }
    });
  }

  // Row-wise softmax over the last dim of [..., T, T] with a causal mask:
  // row t attends to columns 0..t; masked entries are exactly zero.
  Var causal_softmax(Var scores) {
    const auto& sv = value(scores);
    if (sv.rank() < 2 || sv.dim(-1) != sv.dim(-2))
      throw std::invalid_argument("causal_softmax: need [..., T, T]");
    const std::int64_t T = sv.dim(-1);
    const std::int64_t R = sv.numel() / (T * T);
    TensorT<Real> out(sv.shape);
    for (std::int64_t r = 0; r < R; ++r) {
      for (std::int64_t t = 0; t < T; ++t) {
        const Real* row = sv.data.data() + (r * T + t) * T;
        Real* orow = out.data.data() + (r * T + t) * T;
        const std::int64_t L = t + 1;
        double mx = row[0];
        for (std::int64_t j = 1; j < L; ++j) mx = std::max<double>(mx, row[j]);
        double z = 0.0;
        for (std::int64_t j = 0; j < L; ++j) z += std::exp(row[j] - mx);
        for (std::int64_t j = 0; j < L; ++j)
          orow[j] = static_cast<Real>(std::exp(row[j] - mx) / z);
        for (std::int64_t j = L; j < T; ++j) orow[j] = Real(0);
      }
    }
    return record(std::move(out), {scores}, [this, scores, R, T](Var self) {
      if (!wants_grad(scores)) return;
      const auto& g = node(self).grad;
      const auto& p = node(self).value;
      Real* ds = grad_mut(scores);
      for (std::int64_t r = 0; r < R; ++r) {
        for (std::int64_t t = 0; t < T; ++t) {
          const std::int64_t off = (r * T + t) * T;
          const std::int64_t L = t + 1;
          double dot = 0.0;
          for (std::int64_t j = 0; j < L; ++j)
            dot += static_cast<double>(p.data[off + j]) * g.data[off + j];
          for (std::int64_t j = 0; j < L; ++j)
            ds[off + j] += static_cast<Real>(
                p.data[off + j] * (g.data[off + j] - dot));
        }
      }
    });
  }

  // Gather rows of table [V, D] by token id; out is [ids.size(), D].
  Var embedding(Var table, std::span<const std::int64_t> ids) {
    const auto& tv = value(table);
    if (tv.rank() != 2) throw std::invalid_argument("embedding: table rank");
    const std::int64_t V = tv.dim(0), D = tv.dim(1);
    for (auto id : ids)
      if (id < 0 || id >= V)
        throw std::invalid_argument("embedding: token id out of range");
    TensorT<Real> out({static_cast<std::int64_t>(ids.size()), D});
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::int64_t d = 0; d < D; ++d)
        out.data[static_cast<std::int64_t>(i) * D + d] =
            tv.data[ids[i] * D + d];
    std::vector<std::int64_t> ids_copy(ids.begin(), ids.end());
    return record(std::move(out), {table},
                  [this, table, ids_copy = std::move(ids_copy), D](Var self) {
      if (!wants_grad(table)) return;
      const auto& g = node(self).grad;
      Real* dt = grad_mut(table);
      for (std::size_t i = 0; i < ids_copy.size(); ++i)
        for (std::int64_t d = 0; d < D; ++d)
          dt[ids_copy[i] * D + d] += g.data[static_cast<std::int64_t>(i) * D + d];
    });
  }

  Var reshape(Var a, std::vector<std::int64_t> new_shape) {
    const auto& av = value(a);
    if (TensorT<Real>::checked_numel(new_shape) != av.numel())
      throw std::invalid_argument("reshape: numel mismatch");
    TensorT<Real> out = TensorT<Real>::from_values(std::move(new_shape), av.data);
    return record(std::move(out), {a}, [this, a](Var self) {
      if (!wants_grad(a)) return;
      const auto& g = node(self).grad;
      Real* da = grad_mut(a);
      for (std::size_t i = 0; i < g.data.size(); ++i) da[i] += g.data[i];
    });
  }

  // [B, T, H*dk] -> [B, H, T, dk]
  Var split_heads(Var x, std::int64_t n_heads) {
    const auto& xv = value(x);
    if (xv.rank() != 3 || xv.dim(2) % n_heads != 0)
      throw std::invalid_argument("split_heads: shape mismatch");
    const std::int64_t B = xv.dim(0), T = xv.dim(1), D = xv.dim(2);
    const std::int64_t dk = D / n_heads;
    TensorT<Real> out({B, n_heads, T, dk});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t h = 0; h < n_heads; ++h)
          for (std::int64_t k = 0; k < dk; ++k)
            out.data[((b * n_heads + h) * T + t) * dk + k] =
                xv.data[(b * T + t) * D + h * dk + k];
    return record(std::move(out), {x}, [this, x, B, T, n_heads, dk, D](Var self) {
      if (!wants_grad(x)) return;
      const auto& g = node(self).grad;
      Real* dx = grad_mut(x);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t t = 0; t < T; ++t)
          for (std::int64_t h = 0; h < n_heads; ++h)
            for (std::int64_t k = 0; k < dk; ++k)
              dx[(b * T + t) * D + h * dk + k] +=
                  g.data[((b * n_heads + h) * T + t) * dk + k];
    });
  }

  // [B, H, T, dk] -> [B, T, H*dk]
  Var merge_heads(Var x) {
    const auto& xv = value(x);
    if (xv.rank() != 4) throw std::invalid_argument("merge_heads: rank");
    const std::int64_t B = xv.dim(0), H = xv.dim(1), T = xv.dim(2),
                       dk = xv.dim(3);
    TensorT<Real> out({B, T, H * dk});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t t = 0; t < T; ++t)
          for (std::int64_t k = 0; k < dk; ++k)
            out.data[(b * T + t) * H * dk + h * dk + k] =
                xv.data[((b * H + h) * T + t) * dk + k];
    return record(std::move(out), {x}, [this, x, B, H, T, dk](Var self) {
      if (!wants_grad(x)) return;
      const auto& g = node(self).grad;
      Real* dx = grad_mut(x);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t h = 0; h < H; ++h)
          for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t k = 0; k < dk; ++k)
              dx[((b * H + h) * T + t) * dk + k] +=
                  g.data[(b * T + t) * H * dk + h * dk + k];
    });
  }

  // Rotary embedding on [B, H, T, dk]: pair (2i, 2i+1) of position t rotates
  // by t * theta[i]. The backward pass is the inverse rotation.
  Var rope_rotate(Var x, std::span<const double> theta) {
    const auto& xv = value(x);
    if (xv.rank() != 4 || xv.dim(3) % 2 != 0 ||
        static_cast<std::int64_t>(theta.size()) != xv.dim(3) / 2)
      throw std::invalid_argument("rope_rotate: shape/schedule mismatch");
    const std::int64_t BH = xv.dim(0) * xv.dim(1), T = xv.dim(2),
                       dk = xv.dim(3);
    TensorT<Real> out(xv.shape);
    std::vector<double> th(theta.begin(), theta.end());
    for (std::int64_t s = 0; s < BH; ++s)
      for (std::int64_t t = 0; t < T; ++t) {
        const Real* row = xv.data.data() + (s * T + t) * dk;
        Real* orow = out.data.data() + (s * T + t) * dk;
        for (std::int64_t i = 0; i < dk / 2; ++i) {
          const double ang = static_cast<double>(t) * th[static_cast<std::size_t>(i)];
          const double c = std::cos(ang), sn = std::sin(ang);
          const double a = row[2 * i], b = row[2 * i + 1];
          orow[2 * i] = static_cast<Real>(a * c - b * sn);
          orow[2 * i + 1] = static_cast<Real>(a * sn + b * c);
        }
      }
    return record(std::move(out), {x},
                  [this, x, th = std::move(th), BH, T, dk](Var self) {
      if (!wants_grad(x)) return;
      const auto& g = node(self).grad;
      Real* dx = grad_mut(x);
      for (std::int64_t s = 0; s < BH; ++s)
        for (std::int64_t t = 0; t < T; ++t) {
          const Real* grow = g.data.data() + (s * T + t) * dk;
          Real* drow = dx + (s * T + t) * dk;
          for (std::int64_t i = 0; i < dk / 2; ++i) {
            const double ang =
                static_cast<double>(t) * th[static_cast<std::size_t>(i)];
            const double c = std::cos(ang), sn = std::sin(ang);
            const double ga = grow[2 * i], gb = grow[2 * i + 1];
            drow[2 * i] += static_cast<Real>(ga * c + gb * sn);
            drow[2 * i + 1] += static_cast<Real>(-ga * sn + gb * c);
          }
        }
    });
  }

  // [B, T, D] -> [B, D], picking position t.
  Var select_position(Var x, std::int64_t t) {
    const auto& xv = value(x);
    if (xv.rank() != 3 || t < 0 || t >= xv.dim(1))
      throw std::invalid_argument("select_position: bad position");
    const std::int64_t B = xv.dim(0), T = xv.dim(1), D = xv.dim(2);
    TensorT<Real> out({B, D});
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t d = 0; d < D; ++d)
        out.data[b * D + d] = xv.data[(b * T + t) * D + d];
    return record(std::move(out), {x}, [this, x, t, B, T, D](Var self) {
      if (!wants_grad(x)) return;
      const auto& g = node(self).grad;
      Real* dx = grad_mut(x);
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t d = 0; d < D; ++d)
          dx[(b * T + t) * D + d] += g.data[b * D + d];
    });
  }

  // Mean cross-entropy of logits [B, V] against integer targets. The
  // gradient is (softmax - one_hot) / B, the closed form the unit tests use
  // as an oracle.
  Var cross_entropy_mean(Var logits, std::span<const std::int64_t> targets) {
    const auto& lv = value(logits);
    if (lv.rank() != 2 ||
        static_cast<std::int64_t>(targets.size()) != lv.dim(0))
      throw std::invalid_argument("cross_entropy_mean: shape mismatch");
    const std::int64_t B = lv.dim(0), V = lv.dim(1);
    for (auto t : targets)
      if (t < 0 || t >= V)
        throw std::invalid_argument("cross_entropy_mean: target out of range");
    TensorT<Real> probs({B, V});
    double loss = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const Real* row = lv.data.data() + b * V;
      double mx = row[0];
      for (std::int64_t j = 1; j < V; ++j) mx = std::max<double>(mx, row[j]);
      double z = 0.0;
      for (std::int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
      const double lz = mx + std::log(z);
      loss += lz - row[targets[static_cast<std::size_t>(b)]];
      for (std::int64_t j = 0; j < V; ++j)
        probs.data[b * V + j] = static_cast<Real>(std::exp(row[j] - lz));
    }
    loss /= static_cast<double>(B);
    TensorT<Real> out = TensorT<Real>::from_values(
        {1}, {static_cast<Real>(loss)});
    std::vector<std::int64_t> tgt(targets.begin(), targets.end());
    return record(std::move(out), {logits},
                  [this, logits, probs = std::move(probs),
                   tgt = std::move(tgt), B, V](Var self) {
      if (!wants_grad(logits)) return;
      const Real up = node(self).grad.data[0];
      Real* dl = grad_mut(logits);
      const Real invB = static_cast<Real>(1.0 / static_cast<double>(B));
      for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t j = 0; j < V; ++j)
          dl[b * V + j] += up * invB * probs.data[b * V + j];
        dl[b * V + tgt[static_cast<std::size_t>(b)]] -= up * invB;
      }
    });
  }

  // sum_i w_i a_i -> scalar. Test reduction used by the gradient oracle.
  Var weighted_sum(Var a, TensorT<Real> weights) {
    const auto& av = value(a);
    if (!av.same_shape(weights))
      throw std::invalid_argument("weighted_sum: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < av.data.size(); ++i)
      s += static_cast<double>(av.data[i]) * weights.data[i];
    TensorT<Real> out = TensorT<Real>::from_values({1}, {static_cast<Real>(s)});
    return record(std::move(out), {a},
                  [this, a, w = std::move(weights)](Var self) {
      if (!wants_grad(a)) return;
      const Real up = node(self).grad.data[0];
      Real* da = grad_mut(a);
      for (std::size_t i = 0; i < w.data.size(); ++i) da[i] += up * w.data[i];
    });
  }

  Var sum_squares(Var a) {
    const auto& av = value(a);
    double s = 0.0;
    for (auto x : av.data) s += static_cast<double>(x) * x;
    TensorT<Real> out = TensorT<Real>::from_values({1}, {static_cast<Real>(s)});
    return record(std::move(out), {a}, [this, a](Var self) {
      if (!wants_grad(a)) return;
      const Real up = node(self).grad.data[0];
      const auto& av = value(a);
      Real* da = grad_mut(a);
      for (std::size_t i = 0; i < av.data.size(); ++i)
        da[i] += up * Real(2) * av.data[i];
    });
  }

  // Reverse sweep from a scalar loss node. Gradients accumulate into every
  // node with requires_grad on a path to the loss.
  void backward(Var loss) {
    if (!recording_)
      throw std::logic_error("backward: graph built with recording disabled");
    if (value(loss).numel() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    ensure_grad(loss);
    node(loss).grad.data[0] = Real(1);
    for (std::int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.requires_grad && n.backprop && !n.grad.data.empty())
        n.backprop(Var{id});
    }
  }

 private:
  struct Node {
    TensorT<Real> value;
    TensorT<Real> grad;  // allocated lazily during backward
    std::function<void(Var)> backprop;
    bool requires_grad = false;
  };

  Node& node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::out_of_range("GraphT: invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  const Node& node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
      throw std::out_of_range("GraphT: invalid Var");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool wants_grad(Var v) const { return node(v).requires_grad; }

  void ensure_grad(Var v) {
    Node& n = node(v);
    if (n.grad.data.empty()) n.grad = TensorT<Real>::zeros_like(n.value);
  }

  Real* grad_mut(Var v) {
    ensure_grad(v);
    return node(v).grad.data.data();
  }

  template <class Fn>
  Var record(TensorT<Real> out, std::initializer_list<Var> parents, Fn&& fn) {
    Node n;
    n.value = std::move(out);
    if (recording_) {
      bool any = false;
      for (Var p : parents) any = any || node(p).requires_grad;
      if (any) {
        n.requires_grad = true;
        n.backprop = std::forward<Fn>(fn);
      }
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // ------- raw matmul kernels (all accumulate into c) -------
  // c[M,N] += a[M,K] . b[K,N]
  static void mm_nn(const Real* a, const Real* b, Real* c, std::int64_t M,
                    std::int64_t K, std::int64_t N) {
    for (std::int64_t i = 0; i < M; ++i) {
      const Real* arow = a + i * K;
      Real* crow = c + i * N;
      for (std::int64_t k = 0; k < K; ++k) {
        const Real av = arow[k];
        const Real* brow = b + k * N;
        for (std::int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
      }
    }
  }
  // c[M,N] += a[M,K] . b[N,K]^T
  static void mm_nt(const Real* a, const Real* b, Real* c, std::int64_t M,
                    std::int64_t K, std::int64_t N) {
    for (std::int64_t i = 0; i < M; ++i) {
      const Real* arow = a + i * K;
      Real* crow = c + i * N;
      for (std::int64_t j = 0; j < N; ++j) {
        const Real* brow = b + j * K;
        Real s = 0;
        for (std::int64_t k = 0; k < K; ++k) s += arow[k] * brow[k];
        crow[j] += s;
      }
    }
  }
  // c[K,N] += a[M,K]^T . b[M,N]
  static void mm_tn(const Real* a, const Real* b, Real* c, std::int64_t M,
                    std::int64_t K, std::int64_t N) {
    for (std::int64_t i = 0; i < M; ++i) {
      const Real* arow = a + i * K;
      const Real* brow = b + i * N;
      for (std::int64_t k = 0; k < K; ++k) {
        const Real av = arow[k];
        Real* crow = c + k * N;
        for (std::int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
      }
    }
  }

  std::vector<Node> nodes_;
  bool recording_;
};

using Graph = GraphT<double>;

}  // namespace thermo::nn

#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnthermo/nn/graph.hpp"
#include "attnthermo/nn/tensor.hpp"
#include "attnthermo/rope.hpp"
#include "attnthermo/util/numerics.hpp"

namespace thermo::nn {

struct TransformerConfig {
  std::int64_t n_layers = 2;
  std::int64_t d_model = 128;
  std::int64_t n_heads = 4;
  std::int64_t vocab_size = 0;
  std::int64_t seq_len = 0;
  bool use_rope = false;  // default: learned absolute position embeddings
  std::int64_t mlp_mult = 4;
  std::uint64_t seed = 0;

  std::int64_t d_k() const { return d_model / n_heads; }
  void validate() const;
};

// Scaled attention scores and softmax rows for one (layer, head), captured
// without altering the computation. Rows are causal: row t has t+1 live
// entries, the rest are exactly zero in probs and ignored in logits_scaled.
template <class Real>
struct AttentionProbeT {
  TensorT<Real> logits_scaled;  // [B, T, T], QK^T / sqrt(d_k)
  TensorT<Real> probs;          // [B, T, T]
  int layer_index = 0;
  int head_index = 0;
};

using AttentionProbe = AttentionProbeT<double>;

enum class WeightScope { QkProjections, AllAttention, AllParameters };
WeightScope parse_weight_scope(const std::string& name);
std::string weight_scope_name(WeightScope scope);

enum class CvWeighting { RhoWeighted, Unweighted };

// Minimal pre-norm decoder-only transformer: embeddings, multi-head causal
// self-attention with exact 1/sqrt(d_k) scaling (optionally rotary),
// GELU MLP, final layer norm, untied unembedding. Linear layers carry no
// bias. A model instance is exclusively owned by one training run; value
// semantics otherwise.
template <class Real>
class TransformerT {
 public:
  using Graph = GraphT<Real>;
  using Var = typename GraphT<Real>::Var;

  struct ForwardOutput {
    Var logits;                    // [B, T, vocab]
    std::vector<Var> param_vars;   // aligned with params()
    std::vector<AttentionProbeT<Real>> probes;
  };

  static TransformerT make(const TransformerConfig& cfg);

  const TransformerConfig& config() const { return cfg_; }
  const std::vector<TensorT<Real>>& params() const { return params_; }
  std::vector<TensorT<Real>>& params() { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

  // tokens is row-major [B, T]; every id must be < vocab_size.
  ForwardOutput forward(Graph& g, std::span<const std::int64_t> tokens,
                        std::int64_t batch, bool capture_probes) const;

  // Frobenius-squared norm of the parameter matrices in scope.
  double weight_norm_sq(WeightScope scope) const;

 private:
  TransformerConfig cfg_;
  std::vector<TensorT<Real>> params_;
  std::vector<std::string> names_;
  std::vector<double> theta_;  // rotary schedule, present when use_rope

  struct LayerIdx {
    int ln1_g, ln1_b, wq, wk, wv, wo, ln2_g, ln2_b, mlp_w1, mlp_w2;
  };
  int tok_embed_ = -1, pos_embed_ = -1, lnf_g_ = -1, lnf_b_ = -1,
      unembed_ = -1;
  std::vector<LayerIdx> layers_;

  int add_param(const std::string& name, TensorT<Real> t);
};

using Transformer = TransformerT<double>;

// Specific heat of the attention energy landscape, averaged over all probe
// rows, heads, layers, and batch entries.
//   RhoWeighted: per row, E_j = -(scaled logit)_j and
//                cv = (1/T^2)[sum rho E^2 - (sum rho E)^2] under the row's
//                softmax weights; single-entry rows contribute zero.
//   Unweighted:  plain population variance of the scaled logits (the
//                operational Var(QK^T/sqrt(d_k)) reading, no 1/T^2); rows
//                with fewer than two live entries are skipped, and at least
//                one usable row must exist.
template <class Real>
double attention_cv(std::span<const AttentionProbeT<Real>> probes,
                    double temperature, CvWeighting weighting);

// Mean Shannon entropy (nats) of the live prefix of every probe row.
template <class Real>
double mean_attention_entropy(std::span<const AttentionProbeT<Real>> probes);

// ---- template implementations ----

template <class Real>
int TransformerT<Real>::add_param(const std::string& name, TensorT<Real> t) {
  names_.push_back(name);
  params_.push_back(std::move(t));
  return static_cast<int>(params_.size() - 1);
}

template <class Real>
TransformerT<Real> TransformerT<Real>::make(const TransformerConfig& cfg) {
  cfg.validate();
  TransformerT model;
  model.cfg_ = cfg;
  util::Rng rng(cfg.seed);
  const std::int64_t D = cfg.d_model;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(D));

  model.tok_embed_ = model.add_param(
      "tok_embed", TensorT<Real>::randn({cfg.vocab_size, D}, rng, 0.02));
  if (!cfg.use_rope) {
    model.pos_embed_ = model.add_param(
        "pos_embed", TensorT<Real>::randn({cfg.seq_len, D}, rng, 0.02));
  } else {
    model.theta_ = rope::default_theta_schedule(cfg.d_k());
  }
  for (std::int64_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerIdx idx;
    idx.ln1_g = model.add_param(p + "ln1.gamma", TensorT<Real>::full({D}, Real(1)));
    idx.ln1_b = model.add_param(p + "ln1.beta", TensorT<Real>::zeros({D}));
    idx.wq = model.add_param(p + "attn.wq", TensorT<Real>::randn({D, D}, rng, proj_std));
    idx.wk = model.add_param(p + "attn.wk", TensorT<Real>::randn({D, D}, rng, proj_std));
    idx.wv = model.add_param(p + "attn.wv", TensorT<Real>::randn({D, D}, rng, proj_std));
    idx.wo = model.add_param(p + "attn.wo", TensorT<Real>::randn({D, D}, rng, proj_std));
    idx.ln2_g = model.add_param(p + "ln2.gamma", TensorT<Real>::full({D}, Real(1)));
    idx.ln2_b = model.add_param(p + "ln2.beta", TensorT<Real>::zeros({D}));
    idx.mlp_w1 = model.add_param(
        p + "mlp.w1", TensorT<Real>::randn({D, cfg.mlp_mult * D}, rng, proj_std));
    idx.mlp_w2 = model.add_param(
        p + "mlp.w2",
        TensorT<Real>::randn({cfg.mlp_mult * D, D}, rng,
                             1.0 / std::sqrt(static_cast<double>(cfg.mlp_mult * D))));
    model.layers_.push_back(idx);
  }
  model.lnf_g_ = model.add_param("final_ln.gamma", TensorT<Real>::full({D}, Real(1)));
  model.lnf_b_ = model.add_param("final_ln.beta", TensorT<Real>::zeros({D}));
  model.unembed_ = model.add_param(
      "unembed", TensorT<Real>::randn({D, cfg.vocab_size}, rng, proj_std));
  return model;
}

template <class Real>
typename TransformerT<Real>::ForwardOutput TransformerT<Real>::forward(
    Graph& g, std::span<const std::int64_t> tokens, std::int64_t batch,
    bool capture_probes) const {
  if (batch < 1 || tokens.size() % static_cast<std::size_t>(batch) != 0)
    throw std::invalid_argument("forward: tokens not divisible by batch");
  const std::int64_t T =
      static_cast<std::int64_t>(tokens.size()) / batch;
  if (T < 1 || T > cfg_.seq_len)
    throw std::invalid_argument("forward: sequence length out of range");

  ForwardOutput out;
  out.param_vars.reserve(params_.size());
  for (const auto& p : params_) out.param_vars.push_back(g.leaf(p, true));
  auto P = [&](int idx) { return out.param_vars[static_cast<std::size_t>(idx)]; };

  Var x = g.reshape(g.embedding(P(tok_embed_), tokens),
                    {batch, T, cfg_.d_model});
  if (!cfg_.use_rope) x = g.add_position(x, P(pos_embed_));

  const Real inv_sqrt_dk =
      static_cast<Real>(1.0 / std::sqrt(static_cast<double>(cfg_.d_k())));

  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const LayerIdx& idx = layers_[l];
    Var h = g.layer_norm(x, P(idx.ln1_g), P(idx.ln1_b));
    Var q = g.split_heads(g.matmul(h, P(idx.wq)), cfg_.n_heads);
    Var k = g.split_heads(g.matmul(h, P(idx.wk)), cfg_.n_heads);
    Var v = g.split_heads(g.matmul(h, P(idx.wv)), cfg_.n_heads);
    if (cfg_.use_rope) {
      q = g.rope_rotate(q, theta_);
      k = g.rope_rotate(k, theta_);
    }
    Var scores = g.scale(g.bmm(q, k, /*transpose_b=*/true), inv_sqrt_dk);
    Var probs = g.causal_softmax(scores);
    if (capture_probes) {
      const auto& sv = g.value(scores);
      const auto& pv = g.value(probs);
      for (std::int64_t h_i = 0; h_i < cfg_.n_heads; ++h_i) {
        AttentionProbeT<Real> probe;
        probe.layer_index = static_cast<int>(l);
        probe.head_index = static_cast<int>(h_i);
        probe.logits_scaled = TensorT<Real>({batch, T, T});
        probe.probs = TensorT<Real>({batch, T, T});
        for (std::int64_t b = 0; b < batch; ++b)
          for (std::int64_t t = 0; t < T; ++t)
            for (std::int64_t j = 0; j < T; ++j) {
              const std::int64_t src =
                  (((b * cfg_.n_heads + h_i) * T) + t) * T + j;
              const std::int64_t dst = (b * T + t) * T + j;
              probe.logits_scaled.data[dst] = sv.data[src];
              probe.probs.data[dst] = pv.data[src];
            }
        out.probes.push_back(std::move(probe));
      }
    }
    Var attn = g.matmul(g.merge_heads(g.bmm(probs, v, false)), P(idx.wo));
    x = g.add(x, attn);
    Var h2 = g.layer_norm(x, P(idx.ln2_g), P(idx.ln2_b));
    Var m = g.matmul(g.gelu(g.matmul(h2, P(idx.mlp_w1))), P(idx.mlp_w2));
    x = g.add(x, m);
  }
  Var xf = g.layer_norm(x, P(lnf_g_), P(lnf_b_));
  out.logits = g.matmul(xf, P(unembed_));
  return out;
}

template <class Real>
double TransformerT<Real>::weight_norm_sq(WeightScope scope) const {
  double s = 0.0;
  auto acc = [&](int idx) {
    for (Real v : params_[static_cast<std::size_t>(idx)].data)
      s += static_cast<double>(v) * static_cast<double>(v);
  };
  switch (scope) {
    case WeightScope::QkProjections:
      for (const auto& l : layers_) {
        acc(l.wq);
        acc(l.wk);
      }
      break;
    case WeightScope::AllAttention:
      for (const auto& l : layers_) {
        acc(l.wq);
        acc(l.wk);
        acc(l.wv);
        acc(l.wo);
      }
      break;
    case WeightScope::AllParameters:
      for (int i = 0; i < static_cast<int>(params_.size()); ++i) acc(i);
      break;
  }
  return s;
}

template <class Real>
double attention_cv(std::span<const AttentionProbeT<Real>> probes,
                    double temperature, CvWeighting weighting) {
  if (probes.empty()) throw std::invalid_argument("attention_cv: no probes");
  if (!(temperature > 0.0))
    throw std::invalid_argument("attention_cv: temperature must be > 0");
  double total = 0.0;
  std::int64_t rows = 0;
  std::vector<double> e, w;
  for (const auto& probe : probes) {
    const std::int64_t B = probe.probs.dim(0), T = probe.probs.dim(1);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t L = t + 1;
        const std::int64_t off = (b * T + t) * T;
        if (weighting == CvWeighting::RhoWeighted) {
          e.assign(static_cast<std::size_t>(L), 0.0);
          w.assign(static_cast<std::size_t>(L), 0.0);
          for (std::int64_t j = 0; j < L; ++j) {
            e[static_cast<std::size_t>(j)] =
                -static_cast<double>(probe.logits_scaled.data[off + j]);
            w[static_cast<std::size_t>(j)] =
                static_cast<double>(probe.probs.data[off + j]);
          }
          total += util::weighted_variance(e, w) / (temperature * temperature);
          ++rows;
        } else {
          if (L < 2) continue;
          e.assign(static_cast<std::size_t>(L), 0.0);
          for (std::int64_t j = 0; j < L; ++j)
            e[static_cast<std::size_t>(j)] =
                static_cast<double>(probe.logits_scaled.data[off + j]);
          total += util::population_variance(e);
          ++rows;
        }
      }
  }
  if (rows == 0)
    throw std::invalid_argument(
        "attention_cv: unweighted mode needs a row with >= 2 entries");
  return total / static_cast<double>(rows);
}

template <class Real>
double mean_attention_entropy(std::span<const AttentionProbeT<Real>> probes) {
  if (probes.empty())
    throw std::invalid_argument("mean_attention_entropy: no probes");
  double total = 0.0;
  std::int64_t rows = 0;
  std::vector<double> p;
  for (const auto& probe : probes) {
    const std::int64_t B = probe.probs.dim(0), T = probe.probs.dim(1);
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t t = 0; t < T; ++t) {
        const std::int64_t L = t + 1;
        const std::int64_t off = (b * T + t) * T;
        p.assign(static_cast<std::size_t>(L), 0.0);
        for (std::int64_t j = 0; j < L; ++j)
          p[static_cast<std::size_t>(j)] =
              static_cast<double>(probe.probs.data[off + j]);
        total += util::shannon_entropy(p);
        ++rows;
      }
  }
  return total / static_cast<double>(rows);
}

}  // namespace thermo::nn

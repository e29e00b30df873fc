#include "attnthermo/nn/transformer.hpp"

#include <stdexcept>

namespace thermo::nn {

void TransformerConfig::validate() const {
  if (n_layers < 1) throw std::invalid_argument("TransformerConfig: n_layers < 1");
  if (d_model < 1) throw std::invalid_argument("TransformerConfig: d_model < 1");
  if (n_heads < 1) throw std::invalid_argument("TransformerConfig: n_heads < 1");
  if (d_model % n_heads != 0)
    throw std::invalid_argument(
        "TransformerConfig: d_model must be divisible by n_heads");
  if (vocab_size < 1)
    throw std::invalid_argument("TransformerConfig: vocab_size < 1");
  if (seq_len < 1) throw std::invalid_argument("TransformerConfig: seq_len < 1");
  if (mlp_mult < 1) throw std::invalid_argument("TransformerConfig: mlp_mult < 1");
  if (use_rope && d_k() % 2 != 0)
    throw std::invalid_argument("TransformerConfig: rope needs even d_k");
}

WeightScope parse_weight_scope(const std::string& name) {
  if (name == "qk_projections") return WeightScope::QkProjections;
  if (name == "all_attention") return WeightScope::AllAttention;
  if (name == "all_parameters") return WeightScope::AllParameters;
  throw std::invalid_argument("unknown weight scope: " + name);
}

std::string weight_scope_name(WeightScope scope) {
  switch (scope) {
    case WeightScope::QkProjections: return "qk_projections";
    case WeightScope::AllAttention: return "all_attention";
    case WeightScope::AllParameters: return "all_parameters";
  }
  throw std::logic_error("weight_scope_name: bad enum");
}

}  // namespace thermo::nn

#include "attnthermo/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace thermo::nn {

namespace {

constexpr char kMagic[8] = {'A', 'T', 'C', 'K', 'P', 'T', '0', '1'};

nlohmann::json config_to_json(const TransformerConfig& cfg) {
  return {{"n_layers", cfg.n_layers},   {"d_model", cfg.d_model},
          {"n_heads", cfg.n_heads},     {"vocab_size", cfg.vocab_size},
          {"seq_len", cfg.seq_len},     {"use_rope", cfg.use_rope},
          {"mlp_mult", cfg.mlp_mult},   {"seed", cfg.seed}};
}

TransformerConfig config_from_json(const nlohmann::json& j) {
  TransformerConfig cfg;
  cfg.n_layers = j.at("n_layers").get<std::int64_t>();
  cfg.d_model = j.at("d_model").get<std::int64_t>();
  cfg.n_heads = j.at("n_heads").get<std::int64_t>();
  cfg.vocab_size = j.at("vocab_size").get<std::int64_t>();
  cfg.seq_len = j.at("seq_len").get<std::int64_t>();
  cfg.use_rope = j.at("use_rope").get<bool>();
  cfg.mlp_mult = j.at("mlp_mult").get<std::int64_t>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Transformer& model) {
  nlohmann::json header;
  header["schema"] = "checkpoint-v1";
  header["dtype"] = "f64";
  header["config"] = config_to_json(model.config());
  nlohmann::json plist = nlohmann::json::array();
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    plist.push_back({{"name", model.param_names()[i]},
                     {"shape", model.params()[i].shape}});
  }
  header["params"] = plist;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(len));
  for (const auto& p : model.params()) {
    out.write(reinterpret_cast<const char*>(p.data.data()),
              static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

Transformer load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic/version in " +
                             path.string());
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header");
  const auto header = nlohmann::json::parse(header_str);
  if (header.at("schema").get<std::string>() != "checkpoint-v1")
    throw std::runtime_error("load_checkpoint: schema mismatch: " +
                             header.at("schema").get<std::string>());
  if (header.at("dtype").get<std::string>() != "f64")
    throw std::runtime_error("load_checkpoint: unsupported dtype");

  Transformer model = Transformer::make(config_from_json(header.at("config")));
  const auto& plist = header.at("params");
  if (plist.size() != model.params().size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto name = plist[i].at("name").get<std::string>();
    const auto shape = plist[i].at("shape").get<std::vector<std::int64_t>>();
    if (name != model.param_names()[i] || shape != model.params()[i].shape)
      throw std::runtime_error("load_checkpoint: layout mismatch at " + name);
    auto& p = model.params()[i];
    in.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(p.data.size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("load_checkpoint: truncated data");
  return model;
}

}  // namespace thermo::nn

#pragma once

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "aha/errors.hpp"
#include "aha/model.hpp"
#include "json.hpp"

// Self-describing JSON checkpoints: version, model config, named flat
// parameter arrays, and an optional metadata blob (training provenance).
// Doubles round-trip exactly through the shortest-representation encoder.

namespace aha {

constexpr int kCheckpointVersion = 1;

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return {{"vocab", cfg.vocab},
          {"d", cfg.d},
          {"layers", cfg.layers},
          {"heads", cfg.heads},
          {"mlp_hidden", cfg.mlp_hidden},
          {"max_seq_len", cfg.max_seq_len},
          {"window", cfg.window},
          {"tau", cfg.tau},
          {"seed", cfg.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.vocab = j.at("vocab").get<int>();
    cfg.d = j.at("d").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.mlp_hidden = j.at("mlp_hidden").get<int>();
    cfg.max_seq_len = j.at("max_seq_len").get<int>();
    cfg.window = j.at("window").get<int>();
    cfg.tau = j.at("tau").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("checkpoint config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

template <class T>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams<T>& params, nlohmann::json meta = {}) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["config"] = config_to_json(cfg);
  if (!meta.is_null() && !meta.empty()) j["meta"] = std::move(meta);
  nlohmann::json p = nlohmann::json::object();
  params.for_each([&](const std::string& name, const Tensor<T>& t, bool) {
    std::vector<double> v(t.data().begin(), t.data().end());
    p[name] = std::move(v);
  });
  j["params"] = std::move(p);
  std::ofstream out(path);
  if (!out) throw io_error("cannot write checkpoint: " + path);
  out << j.dump();
  out << '\n';
  if (!out) throw io_error("short write on checkpoint: " + path);
}

template <class T>
struct Checkpoint {
  ModelConfig config;
  ModelParams<T> params;
  nlohmann::json meta;
};

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw io_error("checkpoint parse error in " + path + ": " + e.what());
  }
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw io_error("checkpoint missing version field: " + path);
  if (j["version"].get<int>() != kCheckpointVersion)
    throw io_error("unsupported checkpoint version " + j["version"].dump() + " in " + path);

  Checkpoint<T> ck;
  ck.config = config_from_json(j.at("config"));
  ck.params = init_params<T>(ck.config);  // allocates the right shapes
  if (j.contains("meta")) ck.meta = j["meta"];

  const auto& p = j.at("params");
  std::size_t consumed = 0;
  ck.params.for_each([&](const std::string& name, Tensor<T>& t, bool) {
    if (!p.contains(name)) throw io_error("checkpoint missing parameter: " + name);
    const auto& arr = p.at(name);
    if (!arr.is_array() || arr.size() != static_cast<std::size_t>(t.size()))
      throw io_error("checkpoint parameter " + name + " has wrong length");
    auto& dst = t.node()->value;
    for (std::size_t i = 0; i < dst.size(); ++i)
      dst[i] = static_cast<T>(arr[i].get<double>());
    ++consumed;
  });
  if (p.size() != consumed)
    throw io_error("checkpoint has " + std::to_string(p.size() - consumed) +
                   " unrecognized parameter entries");
  return ck;
}

}  // namespace aha

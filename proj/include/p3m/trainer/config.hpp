#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "p3m/core/io.hpp"
#include "p3m/datapipe/augment.hpp"
#include "p3m/p3mcp/cp.hpp"
#include "p3m/p3mnet/model.hpp"

namespace p3m {

struct TrainConfig {
  P3MNetConfig network;
  CPConfig cp;
  std::string cp_library;  // source-face library directory (ICP/FCP)
  AugmentationConfig augmentation;
  std::string data_root;   // holds train/, val_p/, val_np/
  int workers = 1;

  double learning_rate = 1e-5;
  int batch_size = 8;
  int epochs = 150;
  long long max_steps = 0;  // 0: run all epochs
  std::uint64_t seed = 0;
  bool toy = false;
  long long checkpoint_every = 0;  // 0: only at the end
  long long log_every = 10;
  std::string out_dir = "runs/p3m";

  // Desk-scale overrides: 64 px canvas, quarter width, at most 20 epochs.
  void apply_toy() {
    toy = true;
    const auto keep = network.encoder.variant;
    const auto depths = network.encoder.depths;
    network.encoder = EncoderConfig::toy(keep);
    network.encoder.depths = depths;
    const double f = 64.0 / augmentation.out_size;
    for (auto& c : augmentation.crop_sizes) c = std::max(64, static_cast<int>(std::lround(c * f)));
    augmentation.trimap_kernel = scaled_trimap_kernel(augmentation.trimap_kernel, f);
    augmentation.out_size = 64;
    epochs = std::min(epochs, 20);
  }

  void validate() const {
    network.validate();
    cp.validate();
    augmentation.validate();
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (augmentation.out_size % 32 != 0) throw ConfigError("out_size must be a multiple of 32");
    if (cp.mode != CPMode::kNone && cp_library.empty()) throw ConfigError("cp enabled but cp.library is not set");
  }
};

namespace detail {

template <class V>
void read_opt(const nlohmann::json& j, const char* key, V& v) {
  if (j.contains(key)) v = j.at(key).get<V>();
}

}  // namespace detail

inline nlohmann::json to_json(const EncoderConfig& e) {
  return {{"variant", to_string(e.variant)}, {"depths", e.depths},     {"stage_channels", e.stage_channels},
          {"window_size", e.window_size},    {"num_heads", e.num_heads}, {"scale", e.scale}};
}

inline EncoderConfig encoder_from_json(const nlohmann::json& j) {
  EncoderConfig e = EncoderConfig::defaults(parse_variant(j.value("variant", std::string("resnet34"))));
  detail::read_opt(j, "depths", e.depths);
  detail::read_opt(j, "stage_channels", e.stage_channels);
  detail::read_opt(j, "window_size", e.window_size);
  detail::read_opt(j, "num_heads", e.num_heads);
  detail::read_opt(j, "scale", e.scale);
  return e;
}

inline nlohmann::json to_json(const P3MNetConfig& n) {
  return {{"use_tfi", n.use_tfi}, {"use_sbfi", n.use_sbfi}, {"use_dbfi", n.use_dbfi},
          {"decoder_channels", n.decoder_channels}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["encoder"] = to_json(c.network.encoder);
  j["network"] = to_json(c.network);
  j["cp"] = {{"mode", to_string(c.cp.mode)},         {"probability", c.cp.probability},
             {"rotation_deg", c.cp.rotation_deg},    {"scale_min", c.cp.scale_min},
             {"scale_max", c.cp.scale_max},          {"fcp_split_index", c.cp.fcp_split_index},
             {"library", c.cp_library}};
  j["data"] = {{"root", c.data_root},
               {"crop_sizes", c.augmentation.crop_sizes},
               {"out_size", c.augmentation.out_size},
               {"hflip_prob", c.augmentation.hflip_prob},
               {"trimap_kernel", c.augmentation.trimap_kernel},
               {"workers", c.workers}};
  j["train"] = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                {"epochs", c.epochs},               {"max_steps", c.max_steps},
                {"seed", c.seed},                   {"toy", c.toy},
                {"checkpoint_every", c.checkpoint_every}, {"log_every", c.log_every},
                {"out_dir", c.out_dir}};
  return j;
}

// Missing keys keep their defaults. "train.toy": true applies the toy
// overrides before the remaining explicit keys, so explicit values win.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    if (j.contains("encoder")) c.network.encoder = encoder_from_json(j.at("encoder"));
    const auto train = j.value("train", nlohmann::json::object());
    const auto data = j.value("data", nlohmann::json::object());
    const auto enc = j.value("encoder", nlohmann::json::object());
    if (train.value("toy", false)) {
      c.apply_toy();
      detail::read_opt(enc, "depths", c.network.encoder.depths);
      detail::read_opt(enc, "stage_channels", c.network.encoder.stage_channels);
      detail::read_opt(enc, "window_size", c.network.encoder.window_size);
      detail::read_opt(enc, "num_heads", c.network.encoder.num_heads);
      detail::read_opt(enc, "scale", c.network.encoder.scale);
    }
    if (j.contains("network")) {
      const auto& n = j.at("network");
      detail::read_opt(n, "use_tfi", c.network.use_tfi);
      detail::read_opt(n, "use_sbfi", c.network.use_sbfi);
      detail::read_opt(n, "use_dbfi", c.network.use_dbfi);
      detail::read_opt(n, "decoder_channels", c.network.decoder_channels);
    }
    if (j.contains("cp")) {
      const auto& p = j.at("cp");
      if (p.contains("mode")) c.cp.mode = parse_cp_mode(p.at("mode").get<std::string>());
      detail::read_opt(p, "probability", c.cp.probability);
      detail::read_opt(p, "rotation_deg", c.cp.rotation_deg);
      detail::read_opt(p, "scale_min", c.cp.scale_min);
      detail::read_opt(p, "scale_max", c.cp.scale_max);
      detail::read_opt(p, "fcp_split_index", c.cp.fcp_split_index);
      detail::read_opt(p, "library", c.cp_library);
    }
    detail::read_opt(data, "root", c.data_root);
    detail::read_opt(data, "crop_sizes", c.augmentation.crop_sizes);
    detail::read_opt(data, "out_size", c.augmentation.out_size);
    detail::read_opt(data, "hflip_prob", c.augmentation.hflip_prob);
    detail::read_opt(data, "trimap_kernel", c.augmentation.trimap_kernel);
    detail::read_opt(data, "workers", c.workers);
    detail::read_opt(train, "learning_rate", c.learning_rate);
    detail::read_opt(train, "batch_size", c.batch_size);
    detail::read_opt(train, "epochs", c.epochs);
    detail::read_opt(train, "max_steps", c.max_steps);
    detail::read_opt(train, "seed", c.seed);
    detail::read_opt(train, "checkpoint_every", c.checkpoint_every);
    detail::read_opt(train, "log_every", c.log_every);
    detail::read_opt(train, "out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

// P3M_DATA_ROOT and P3M_SEED take precedence over the file.
inline void apply_env_overrides(TrainConfig& c) {
  if (const char* root = std::getenv("P3M_DATA_ROOT"); root && *root) c.data_root = root;
  if (const char* seed = std::getenv("P3M_SEED"); seed && *seed) {
    try {
      c.seed = std::stoull(seed);
    } catch (const std::exception&) {
      throw ConfigError(std::string("P3M_SEED is not an integer: ") + seed);
    }
  }
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  TrainConfig c = train_config_from_json(j);
  apply_env_overrides(c);
  return c;
}

}  // namespace p3m

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "p3m/core/parallel.hpp"
#include "p3m/datapipe/augment.hpp"
#include "p3m/datapipe/trimap.hpp"
#include "p3m/p3mcp/fcp.hpp"
#include "p3m/p3mcp/library.hpp"
#include "p3m/trainer/checkpoint.hpp"
#include "p3m/trainer/config.hpp"
#include "p3m/trainer/evaluation.hpp"
#include "p3m/trainer/losses.hpp"
#include "p3m/trainer/optimizer.hpp"

namespace p3m {

// Network-ready tensors for one mini-batch.
template <class T>
struct Batch {
  nn::Tensor<T> images;  // [N,3,H,W]
  nn::Tensor<T> alpha;   // [N,1,H,W]
  std::vector<std::uint8_t> labels;      // trimap class per pixel
  std::vector<std::uint8_t> transition;  // 1 on trimap transition pixels
  std::vector<BinaryMask> facemasks;
  int size() const { return images.n(); }
};

template <class T>
Batch<T> make_batch(const std::vector<Sample>& samples, int trimap_kernel) {
  if (samples.empty()) throw ConfigError("empty batch");
  const int H = samples[0].image.height(), W = samples[0].image.width(), N = static_cast<int>(samples.size());
  Batch<T> b{nn::Tensor<T>(N, 3, H, W), nn::Tensor<T>(N, 1, H, W), {}, {}, {}};
  const std::size_t P = static_cast<std::size_t>(H) * W;
  b.labels.resize(N * P);
  b.transition.resize(N * P);
  for (int n = 0; n < N; ++n) {
    const auto& s = samples[n];
    if (s.image.height() != H || s.image.width() != W) throw ShapeError("batch samples differ in size");
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < P; ++p) b.images[b.images.offset(n, c, 0, 0) + p] = static_cast<T>(s.image.plane(c)[p]);
    const Trimap t = trimap_from_alpha(s.alpha, trimap_kernel);
    for (std::size_t p = 0; p < P; ++p) {
      b.alpha[n * P + p] = static_cast<T>(s.alpha.data()[p]);
      b.labels[n * P + p] = t.data()[p];
      b.transition[n * P + p] = t.data()[p] == static_cast<std::uint8_t>(TrimapLabel::kTransition);
    }
    b.facemasks.push_back(s.facemask);
  }
  return b;
}

struct StepLog {
  long long step = 0;
  int epoch = 0;
  LossReport loss;
  bool cp_applied = false;
  double seconds = 0;
};

struct FitResult {
  long long steps = 0;
  LossReport last;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::filesystem::path> reports;
};

template <class T = float>
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)), model_(cfg_.network, cfg_.seed), adam_(model_.store(), AdamConfig{cfg_.learning_rate}),
        rng_(cfg_.seed ^ 0x5eedf00dULL) {
    cfg_.validate();
  }

  P3MNet<T>& model() { return model_; }
  const P3MNet<T>& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  long long step() const { return step_; }

  void set_training_set(std::vector<Sample> samples) {
    if (samples.empty()) throw ConfigError("training set is empty");
    train_ = std::move(samples);
  }
  const std::vector<Sample>& training_set() const { return train_; }
  void set_library(SourceLibrary lib) { library_ = std::move(lib); }

  long long steps_per_epoch() const {
    return (static_cast<long long>(train_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  }
  long long total_steps() const {
    return cfg_.max_steps > 0 ? cfg_.max_steps : cfg_.epochs * steps_per_epoch();
  }

  // Augmented samples for a global step: per-epoch permutation, then crop,
  // flip and (ICP) paste, each sample on its own seed-derived generator.
  std::vector<Sample> prepare_batch(long long step) const {
    if (train_.empty()) throw StateError("no training set");
    const long long spe = steps_per_epoch();
    const auto epoch = static_cast<std::uint64_t>(step / spe);
    const long long pos = step % spe;
    std::vector<std::size_t> perm(train_.size());
    std::iota(perm.begin(), perm.end(), 0);
    auto prng = sample_rng(cfg_.seed, epoch, std::numeric_limits<std::uint64_t>::max());
    std::shuffle(perm.begin(), perm.end(), prng);
    const std::size_t begin = pos * cfg_.batch_size, end = std::min(perm.size(), begin + cfg_.batch_size);
    std::vector<Sample> out(end - begin);
    parallel_for(out.size(), cfg_.workers, [&](std::size_t k) {
      const std::size_t idx = perm[begin + k];
      auto rng = sample_rng(cfg_.seed, epoch, idx);
      Sample s = random_crop_resize(train_[idx], rng, cfg_.augmentation);
      s = random_hflip(s, rng, cfg_.augmentation);
      if (cfg_.cp.mode == CPMode::kICP && !library_.empty()) {
        std::vector<CPSample> one{{s.image, s.facemask}};
        icp_apply(one, library_, rng, cfg_.cp);
        s.image = std::move(one[0].image);
      }
      out[k] = std::move(s);
    });
    return out;
  }

  // Forward + loss without touching parameters (BN in training mode unless eval).
  Losses<T> losses(const Batch<T>& b, const Mode& mode, bool* cp_applied = nullptr) {
    const auto img = nn::constant(b.images);
    NetworkOutput<T> out;
    bool merged = false;
    if (cfg_.cp.mode == CPMode::kFCP && !library_.empty() && mode.training) {
      std::uniform_int_distribution<std::size_t> pick(0, library_.size() - 1);
      const auto src = fit_to_canvas(library_[pick(rng_)], b.images.h(), b.images.w());
      auto r = fcp_forward(model_, nn::constant(image_tensor<T>(src.image)), src.facemask, img, b.facemasks, rng_,
                           cfg_.cp, mode);
      out = std::move(r.output);
      merged = r.merged;
    } else {
      out = model_.forward(img, mode);
    }
    if (cp_applied) *cp_applied = merged;
    return total_loss(out.seg_logits, out.detail_alpha, out.fused_alpha, b.alpha, b.labels, b.transition);
  }

  // One optimisation step on a prepared batch.
  LossReport train_step(const Batch<T>& b, bool* cp_applied = nullptr) {
    model_.store().zero_grad();
    auto l = losses(b, Mode{true, true}, cp_applied);
    const LossReport rep = report_of(l);
    guard(rep);
    nn::backward(l.total);
    adam_.step();
    model_.store().zero_grad();
    ++step_;
    return rep;
  }

  StepLog train_next() {
    const auto t0 = std::chrono::steady_clock::now();
    StepLog log;
    log.step = step_;
    log.epoch = static_cast<int>(step_ / steps_per_epoch());
    const auto batch = make_batch<T>(prepare_batch(step_), cfg_.augmentation.trimap_kernel);
    log.loss = train_step(batch, &log.cp_applied);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return log;
  }

  // Checkpoint with parameters, BN buffers, Adam moments and loop state.
  void save(const std::filesystem::path& path) const {
    Checkpoint ck;
    ck.meta["format"] = 1;
    ck.meta["config"] = to_json(cfg_);
    std::ostringstream rs;
    rs << rng_;
    ck.meta["trainer"] = {{"step", step_},
                          {"adam_steps", adam_.steps()},
                          {"rng", rs.str()},
                          {"initial_loss", initial_loss_ ? *initial_loss_ : -1.0},
                          {"over_count", over_count_}};
    pack_store(model_.store(), ck);
    const auto& params = model_.store().parameters();
    auto& adam = const_cast<Adam<T>&>(adam_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      ck.tensors.push_back({"adam_m/" + params[k].name, adam.first_moments()[k].template cast<float>()});
      ck.tensors.push_back({"adam_v/" + params[k].name, adam.second_moments()[k].template cast<float>()});
    }
    write_checkpoint(path, ck);
  }

  void load(const std::filesystem::path& path) { restore(read_checkpoint(path)); }

  void restore(const Checkpoint& ck) {
    unpack_store(ck, model_.store());
    const auto& params = model_.store().parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
      adam_.first_moments()[k] = ck.get("adam_m/" + params[k].name).template cast<T>();
      adam_.second_moments()[k] = ck.get("adam_v/" + params[k].name).template cast<T>();
    }
    const auto& t = ck.meta.at("trainer");
    step_ = t.at("step").get<long long>();
    adam_.set_steps(t.at("adam_steps").get<long long>());
    std::istringstream rs(t.at("rng").get<std::string>());
    rs >> rng_;
    const double il = t.at("initial_loss").get<double>();
    initial_loss_ = il < 0 ? std::nullopt : std::optional<double>(il);
    over_count_ = t.at("over_count").get<int>();
  }

  // Full run from config: data under data_root/train, checkpoints and logs
  // under out_dir, then both evaluation protocols if the splits exist.
  FitResult fit() {
    namespace fs = std::filesystem;
    const fs::path root(cfg_.data_root), out(cfg_.out_dir);
    if (train_.empty()) {
      const auto recs = scan_dataset(root / "train", Split::kTrain);
      std::vector<Sample> samples(recs.size());
      parallel_for(recs.size(), cfg_.workers, [&](std::size_t i) { samples[i] = load_sample(recs[i]); });
      set_training_set(std::move(samples));
    }
    if (cfg_.cp.mode != CPMode::kNone && library_.empty()) {
      std::size_t skipped = 0;
      library_ = load_source_library(cfg_.cp_library, &skipped);
      (void)skipped;
    }
    fs::create_directories(out / "checkpoints");
    write_text_atomic(out / "config.json", to_json(cfg_).dump(2) + "\n");
    std::ofstream logf(out / "train_log.jsonl", std::ios::app);
    FitResult res;
    const long long total = total_steps();
    while (step_ < total) {
      const StepLog log = train_next();
      res.last = log.loss;
      if (cfg_.log_every > 0 && (step_ % cfg_.log_every == 0 || step_ == total || step_ == 1)) {
        logf << nlohmann::json{{"step", step_},
                               {"epoch", log.epoch},
                               {"l_semantic", log.loss.l_semantic},
                               {"l_detail", log.loss.l_detail},
                               {"l_fusion", log.loss.l_fusion},
                               {"total", log.loss.total},
                               {"cp_applied", log.cp_applied},
                               {"seconds", log.seconds}}
                    .dump()
             << '\n'
             << std::flush;
      }
      if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 && step_ != total) {
        char name[64];
        std::snprintf(name, sizeof name, "step_%08lld.ckpt", step_);
        save(out / "checkpoints" / name);
        res.checkpoints.push_back(out / "checkpoints" / name);
      }
    }
    save(out / "checkpoints" / "final.ckpt");
    res.checkpoints.push_back(out / "checkpoints" / "final.ckpt");
    res.steps = step_;
    if (fs::is_directory(root / "val_p") && fs::is_directory(root / "val_np")) {
      EvalOptions opt;
      opt.trimap_kernel = cfg_.augmentation.trimap_kernel;
      opt.workers = cfg_.workers;
      const auto rep = evaluate_protocol(model_, root / "val_p", root / "val_np", opt);
      write_protocol_reports(out / "reports", rep, opt);
      res.reports = {out / "reports" / "B_B.json", out / "reports" / "B_N.json"};
    }
    return res;
  }

 private:
  // Aborts on a non-finite loss or after 100 consecutive steps above 10x the first loss.
  void guard(const LossReport& r) {
    if (!r.finite() || (initial_loss_ && r.total > 10.0 * *initial_loss_ && ++over_count_ >= 100)) {
      nlohmann::json dump{{"step", step_},
                          {"l_semantic", r.l_semantic},
                          {"l_detail", r.l_detail},
                          {"l_fusion", r.l_fusion},
                          {"total", r.total},
                          {"initial_total", initial_loss_ ? *initial_loss_ : r.total},
                          {"consecutive_over", over_count_}};
      if (!cfg_.out_dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg_.out_dir, ec);
        if (!ec) write_text_atomic(std::filesystem::path(cfg_.out_dir) / "divergence.json", dump.dump(2) + "\n");
      }
      throw DivergenceError("training diverged: " + dump.dump());
    }
    if (!initial_loss_) initial_loss_ = r.total;
    if (r.total <= 10.0 * *initial_loss_) over_count_ = 0;
  }

  TrainConfig cfg_;
  P3MNet<T> model_;
  Adam<T> adam_;
  std::mt19937_64 rng_;  // FCP source choice and coin
  std::vector<Sample> train_;
  SourceLibrary library_;
  long long step_ = 0;
  std::optional<double> initial_loss_;
  int over_count_ = 0;
};

// Rebuilds the network recorded in a trainer checkpoint and loads its weights.
inline std::unique_ptr<P3MNet<float>> load_model(const std::filesystem::path& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (!ck.meta.contains("config")) throw FormatError(path.string() + ": checkpoint carries no config");
  const TrainConfig cfg = train_config_from_json(ck.meta.at("config"));
  auto model = std::make_unique<P3MNet<float>>(cfg.network, cfg.seed);
  unpack_store(ck, model->store());
  return model;
}

}  // namespace p3m

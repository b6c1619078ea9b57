#pragma once

// AdamW with decoupled weight decay, global gradient-norm clipping, and the
// two-drop step learning-rate schedule. The training loop samples one clip
// per step and emits a JSON-lines loss log.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "novis/clip.hpp"
#include "novis/losses.hpp"
#include "novis/model.hpp"
#include "novis/rng.hpp"
#include "novis/synth.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>>& params, AdamWConfig cfg)
      : params_(params), cfg_(cfg) {
    for (auto& [name, t] : params_) {
      m_.emplace_back(static_cast<std::size_t>(t.size()), 0.0f);
      v_.emplace_back(static_cast<std::size_t>(t.size()), 0.0f);
    }
  }

  // Scales gradients so their global L2 norm is at most max_norm; returns
  // the pre-clip norm.
  double clip_gradients(double max_norm) {
    double sq = 0;
    for (auto& [name, t] : params_)
      for (float g : t.grad()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
      const float s = static_cast<float>(max_norm / norm);
      for (auto& [name, t] : params_) {
        float* g = t.grad_data();
        for (long long i = 0; i < t.size(); ++i) g[i] *= s;
      }
    }
    return norm;
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& tensor = params_[p].second;
      float* w = tensor.data();
      const float* g = tensor.grad_data();
      float* m = m_[p].data();
      float* v = v_[p].data();
      for (long long i = 0; i < tensor.size(); ++i) {
        m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i]);
        v[i] = static_cast<float>(cfg_.beta2 * v[i] +
                                  (1.0 - cfg_.beta2) * static_cast<double>(g[i]) * g[i]);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i];
        w[i] = static_cast<float>(w[i] - lr * update);
      }
    }
  }

  void zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>>& params_;
  AdamWConfig cfg_;
  std::vector<std::vector<float>> m_, v_;
  long long t_ = 0;
};

// Base rate dropped by 10x at 60% and again at 85% of the run.
inline double scheduled_lr(double base, int step, int total_steps) {
  const double progress = total_steps > 0 ? static_cast<double>(step) / total_steps : 0.0;
  if (progress >= 0.85) return base * 0.01;
  if (progress >= 0.60) return base * 0.1;
  return base;
}

struct TrainConfig {
  int steps = 3000;
  int clip_len = 4;
  int sample_range = 5;  // +- window for companion frames
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  std::uint64_t seed = 1;
  LossWeights loss;
  int log_every = 25;
  bool augment = true;
};

struct TrainStepRecord {
  int step = 0;
  LossBreakdown loss;
  double grad_norm = 0;
  double lr = 0;
};

// One clip per step, sampled from a uniformly chosen video. Deterministic
// given the config seed. Writes one JSON line per logged step.
inline std::vector<TrainStepRecord> train_model(VideoModel& model,
                                                const std::vector<VideoSample>& videos,
                                                const TrainConfig& cfg,
                                                std::ostream* jsonl = nullptr) {
  check_contract(!videos.empty(), "train_model: no training videos");
  model.set_training(true);
  AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW opt(model.parameters(), opt_cfg);
  Rng rng(cfg.seed ^ 0x5bf0f5e2u);

  std::vector<TrainStepRecord> log;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto& video = videos[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(videos.size()) - 1))];
    auto clip = sample_training_clip(video, cfg.clip_len, cfg.sample_range, rng, cfg.augment);

    TrainStepRecord rec;
    rec.step = step;
    rec.lr = scheduled_lr(cfg.lr, step, cfg.steps);
    {
      TapeT<float> tape;
      opt.zero_grad();
      auto out = model.forward(clip.frames);
      auto loss = clip_loss(out, clip.gt, cfg.loss);
      rec.loss = loss.breakdown;
      backward(loss.total);
    }
    rec.grad_norm = opt.clip_gradients(cfg.clip_norm);
    opt.step(rec.lr);

    if (step % cfg.log_every == 0 || step + 1 == cfg.steps) {
      if (jsonl) {
        nlohmann::json j;
        j["step"] = rec.step;
        j["total"] = rec.loss.total;
        j["class"] = rec.loss.cls;
        j["mask"] = rec.loss.mask;
        j["dice"] = rec.loss.dice;
        j["grad_norm"] = rec.grad_norm;
        j["lr"] = rec.lr;
        (*jsonl) << j.dump() << "\n";
      }
      log.push_back(rec);
    }
  }
  model.set_training(false);
  return log;
}

// Loads every video of a dataset split into memory for training.
inline std::vector<VideoSample> load_video_samples(const Dataset& ds) {
  std::vector<VideoSample> out;
  for (const auto& v : ds.videos) {
    VideoSample s;
    s.frames = load_video_frames(ds, v);
    s.gt = load_video_gt(ds, v);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace novis

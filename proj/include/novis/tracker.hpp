#pragma once

// Near-online inference: decode overlapping clip windows, select top-k
// instances, match identities between adjacent clips (output embeddings,
// overlap embeddings, or the mask-IoU + class heuristic), and average mask
// probabilities over overlapping frames. Also the per-frame online baseline
// with an embedding track buffer.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "novis/bitvolume.hpp"
#include "novis/hungarian.hpp"
#include "novis/model.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct ClipWindow {
  int start = 0;
  int length = 0;
  int overlap_with_prev = 0;  // frames shared with the previous window
};

// Window starts 0, S, 2S, ... plus a final start clamped to max(0, total-T)
// so the last frame is always covered. A video shorter than T yields a
// single short window.
inline std::vector<ClipWindow> schedule_clips(int total, int clip_len, int stride) {
  check_contract(total >= 1, "schedule_clips: empty video");
  check_contract(stride >= 1 && stride <= clip_len, "schedule_clips: need 1 <= S <= T");
  std::vector<int> starts;
  if (total <= clip_len) {
    starts.push_back(0);
  } else {
    for (int s = 0; s + clip_len < total; s += stride) starts.push_back(s);
    starts.push_back(total - clip_len);
  }
  std::vector<ClipWindow> windows;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    ClipWindow w;
    w.start = starts[i];
    w.length = std::min(clip_len, total - w.start);
    if (i > 0) {
      const int prev_end = windows.back().start + windows.back().length;
      w.overlap_with_prev = std::max(0, prev_end - w.start);
    }
    windows.push_back(w);
  }
  return windows;
}

enum class MatchMode { embedding, overlap_embedding, heuristic };

struct OverlapEmbedding {
  std::vector<float> values;
  bool fallback = false;
};

struct ClipInstance {
  int query = 0;
  std::vector<double> class_probs;  // K+1
  double score = 0;                 // max foreground probability
  Tensor mask_probs;                // [T_clip x H x W] at frame resolution
  std::vector<float> embedding;     // output embedding, [C]
  OverlapEmbedding start_overlap;   // w.r.t. frames shared with the previous window
  OverlapEmbedding end_overlap;     // w.r.t. frames shared with the next window
};

struct ClipInstances {
  ClipWindow window;
  std::vector<ClipInstance> instances;  // scores descending
};

// score = max non-background probability; keep top_k by score (ties resolved
// by query index); masks = sigmoid(mask logits) resized to frame resolution.
inline ClipInstances select_instances(const DecodeResultT<float>& decode, int top_k,
                                      int frame_h, int frame_w) {
  const int n = decode.class_logits.dim(0);
  const int k1 = decode.class_logits.dim(1);
  check_contract(top_k >= 1 && top_k <= n, "select_instances: top_k must be in 1..N");

  std::vector<std::vector<double>> probs(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> ranked;
  for (int q = 0; q < n; ++q) {
    const float* lv = decode.class_logits.data() + static_cast<long long>(q) * k1;
    double mx = lv[0];
    for (int j = 1; j < k1; ++j) mx = std::max(mx, static_cast<double>(lv[j]));
    double denom = 0;
    auto& p = probs[static_cast<std::size_t>(q)];
    p.resize(static_cast<std::size_t>(k1));
    for (int j = 0; j < k1; ++j) {
      p[static_cast<std::size_t>(j)] = std::exp(lv[j] - mx);
      denom += p[static_cast<std::size_t>(j)];
    }
    double best = 0;
    for (int j = 0; j < k1; ++j) {
      p[static_cast<std::size_t>(j)] /= denom;
      if (j < k1 - 1) best = std::max(best, p[static_cast<std::size_t>(j)]);
    }
    ranked.emplace_back(-best, q);  // ascending sort, ties by query index
  }
  std::sort(ranked.begin(), ranked.end());

  const int t = decode.mask_logits.dim(1);
  const int c = decode.output_embeddings.dim(1);
  ClipInstances out;
  for (int r = 0; r < top_k; ++r) {
    const int q = ranked[static_cast<std::size_t>(r)].second;
    ClipInstance inst;
    inst.query = q;
    inst.class_probs = probs[static_cast<std::size_t>(q)];
    inst.score = -ranked[static_cast<std::size_t>(r)].first;
    const float* erow = decode.output_embeddings.data() + static_cast<long long>(q) * c;
    inst.embedding.assign(erow, erow + c);

    auto logits_row = gather_rows(decode.mask_logits.detached(), {q});  // [1 x T x h x w]
    auto prob_row = sigmoid(reshape(logits_row, {t, decode.mask_logits.dim(2),
                                                 decode.mask_logits.dim(3)}));
    inst.mask_probs = bilinear_resize(prob_row, frame_h, frame_w);
    out.instances.push_back(std::move(inst));
  }
  return out;
}

namespace detail {

inline double cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;  // zero-vector guard
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline int argmax_foreground(const std::vector<double>& probs) {
  int best = 0;
  for (int j = 1; j + 1 < static_cast<int>(probs.size()); ++j)
    if (probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(best)]) best = j;
  return best;
}

// Volumetric IoU of two instances' binarized masks over the frames both
// clips share (global frame ids), plus 1 for an agreeing class argmax.
inline double heuristic_similarity(const ClipInstance& a, const ClipWindow& wa,
                                   const ClipInstance& b, const ClipWindow& wb) {
  const int lo = std::max(wa.start, wb.start);
  const int hi = std::min(wa.start + wa.length, wb.start + wb.length);
  const int h = a.mask_probs.dim(1), w = a.mask_probs.dim(2);
  long long inter = 0, uni = 0;
  for (int f = lo; f < hi; ++f) {
    const float* pa = a.mask_probs.data() + static_cast<long long>(f - wa.start) * h * w;
    const float* pb = b.mask_probs.data() + static_cast<long long>(f - wb.start) * h * w;
    for (long long i = 0; i < static_cast<long long>(h) * w; ++i) {
      const bool va = pa[i] > 0.5f, vb = pb[i] > 0.5f;
      inter += (va && vb) ? 1 : 0;
      uni += (va || vb) ? 1 : 0;
    }
  }
  const double iou = uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
  const double bonus =
      argmax_foreground(a.class_probs) == argmax_foreground(b.class_probs) ? 1.0 : 0.0;
  return iou + bonus;
}

}  // namespace detail

struct MatchConfig {
  MatchMode mode = MatchMode::overlap_embedding;
  double min_similarity = -1e30;  // disabled by default; config-exposed
};

// One-to-one maximum-similarity assignment between the previous and the next
// clip's instances. Returns, per next instance, the matched prev index or -1.
// Overlap and heuristic modes fall back to full-clip embedding matching when
// the windows share no frames (the S = T case).
inline std::vector<int> match_clips(const ClipInstances& prev, const ClipInstances& next,
                                    const MatchConfig& cfg) {
  const int np = static_cast<int>(prev.instances.size());
  const int nn = static_cast<int>(next.instances.size());
  std::vector<int> result(static_cast<std::size_t>(nn), -1);
  if (np == 0 || nn == 0) return result;

  const int shared = std::min(prev.window.start + prev.window.length,
                              next.window.start + next.window.length) -
                     std::max(prev.window.start, next.window.start);
  MatchMode mode = cfg.mode;
  if (shared <= 0 && mode != MatchMode::embedding) mode = MatchMode::embedding;

  std::vector<double> sim(static_cast<std::size_t>(np) * nn);
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < nn; ++j) {
      const auto& a = prev.instances[static_cast<std::size_t>(i)];
      const auto& b = next.instances[static_cast<std::size_t>(j)];
      double s = 0;
      switch (mode) {
        case MatchMode::embedding:
          s = detail::cosine(a.embedding, b.embedding);
          break;
        case MatchMode::overlap_embedding:
          s = detail::cosine(a.end_overlap.values, b.start_overlap.values);
          break;
        case MatchMode::heuristic:
          s = detail::heuristic_similarity(a, prev.window, b, next.window);
          break;
      }
      sim[static_cast<std::size_t>(i) * nn + j] = s;
    }

  auto rows = solve_assignment_max(sim, np, nn);
  for (int i = 0; i < np; ++i) {
    const int j = rows[static_cast<std::size_t>(i)];
    if (j >= 0 && sim[static_cast<std::size_t>(i) * nn + j] >= cfg.min_similarity)
      result[static_cast<std::size_t>(j)] = i;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Track accumulation and the finalized track set
// ---------------------------------------------------------------------------

struct FinalizedTrack {
  int id = 0;
  int class_id = 0;
  double score = 0;
  BitVolume masks;  // [video frames x H x W]
};

struct TrackSet {
  std::string video_id;
  int frames = 0, height = 0, width = 0;
  std::vector<FinalizedTrack> tracks;
};

class TrackAccumulator {
 public:
  TrackAccumulator(int frames, int height, int width)
      : frames_(frames), height_(height), width_(width) {}

  int new_track() {
    tracks_.emplace_back();
    auto& t = tracks_.back();
    t.id = next_id_++;
    t.prob_sum.assign(static_cast<std::size_t>(frames_),
                      std::vector<float>());
    t.counts.assign(static_cast<std::size_t>(frames_), 0);
    return t.id;
  }

  // Accumulates mask probabilities and counts for the window's frames and
  // folds the instance's score and class mass into the track.
  void merge(int track_id, const ClipWindow& window, const ClipInstance& inst) {
    auto& t = track_by_id(track_id);
    const long long plane = static_cast<long long>(height_) * width_;
    for (int f = 0; f < window.length; ++f) {
      const int gframe = window.start + f;
      auto& sum = t.prob_sum[static_cast<std::size_t>(gframe)];
      if (sum.empty()) sum.assign(static_cast<std::size_t>(plane), 0.0f);
      const float* p = inst.mask_probs.data() + static_cast<long long>(f) * plane;
      for (long long i = 0; i < plane; ++i) sum[static_cast<std::size_t>(i)] += p[i];
      t.counts[static_cast<std::size_t>(gframe)] += 1;
    }
    t.score_sum += inst.score;
    t.clips += 1;
    if (t.class_mass.size() != inst.class_probs.size())
      t.class_mass.assign(inst.class_probs.size(), 0.0);
    for (std::size_t j = 0; j < inst.class_probs.size(); ++j)
      t.class_mass[j] += inst.class_probs[j];
  }

  // Average the accumulated probabilities and binarize strictly above 0.5;
  // exact 0.5 resolves to background. Track score is the mean clip score;
  // the class is the foreground argmax of the accumulated probability mass.
  TrackSet finalize(const std::string& video_id) const {
    TrackSet out;
    out.video_id = video_id;
    out.frames = frames_;
    out.height = height_;
    out.width = width_;
    for (const auto& t : tracks_) {
      FinalizedTrack ft;
      ft.id = t.id;
      ft.score = t.clips > 0 ? t.score_sum / t.clips : 0.0;
      ft.class_id = detail::argmax_foreground(t.class_mass);
      ft.masks = BitVolume(frames_, height_, width_);
      const long long plane = static_cast<long long>(height_) * width_;
      for (int f = 0; f < frames_; ++f) {
        if (t.counts[static_cast<std::size_t>(f)] == 0) continue;
        const float inv = 1.0f / static_cast<float>(t.counts[static_cast<std::size_t>(f)]);
        const auto& sum = t.prob_sum[static_cast<std::size_t>(f)];
        for (long long i = 0; i < plane; ++i)
          if (sum[static_cast<std::size_t>(i)] * inv > 0.5f)
            ft.masks.set_flat(static_cast<long long>(f) * plane + i, true);
      }
      out.tracks.push_back(std::move(ft));
    }
    return out;
  }

 private:
  struct PendingTrack {
    int id = 0;
    double score_sum = 0;
    int clips = 0;
    std::vector<double> class_mass;
    std::vector<std::vector<float>> prob_sum;  // per video frame
    std::vector<int> counts;
  };
  PendingTrack& track_by_id(int id) {
    for (auto& t : tracks_)
      if (t.id == id) return t;
    throw contract_error("unknown track id");
  }
  int frames_, height_, width_;
  int next_id_ = 0;
  std::vector<PendingTrack> tracks_;
};

// ---------------------------------------------------------------------------
// Pipelines
// ---------------------------------------------------------------------------

struct TrackerConfig {
  int clip_len = 4;
  int stride = 2;
  int top_k = 10;
  MatchConfig match;
};

namespace detail {

inline Tensor slice_frames(const Tensor& video, int start, int length) {
  const long long per_frame = video.size() / video.dim(0);
  Tensor out({length, video.dim(1), video.dim(2), video.dim(3)});
  std::copy(video.data() + start * per_frame, video.data() + (start + length) * per_frame,
            out.data());
  return out;
}

inline void attach_overlap(ClipInstances& inst, const OverlapResultT<float>& ov,
                           bool is_start) {
  const int c = ov.embeddings.dim(1);
  for (auto& instance : inst.instances) {
    OverlapEmbedding e;
    const float* row = ov.embeddings.data() + static_cast<long long>(instance.query) * c;
    e.values.assign(row, row + c);
    e.fallback = ov.fallback[static_cast<std::size_t>(instance.query)] != 0;
    (is_start ? instance.start_overlap : instance.end_overlap) = e;
  }
}

}  // namespace detail

// Sliding-window near-online tracking over a [frames x 3 x H x W] video.
inline TrackSet run_near_online(const Tensor& video, const VideoModel& model,
                                const TrackerConfig& cfg, const std::string& video_id = "") {
  const int total = video.dim(0), h = video.dim(2), w = video.dim(3);
  auto windows = schedule_clips(total, cfg.clip_len, cfg.stride);
  TrackAccumulator acc(total, h, w);

  ClipInstances prev;
  std::vector<int> prev_track_ids;
  for (std::size_t wi = 0; wi < windows.size(); ++wi) {
    const ClipWindow& win = windows[wi];
    auto decode = model.forward(detail::slice_frames(video, win.start, win.length));
    auto inst = select_instances(decode, std::min(cfg.top_k, model.config().queries), h, w);
    inst.window = win;

    if (cfg.match.mode == MatchMode::overlap_embedding) {
      if (win.overlap_with_prev > 0)
        detail::attach_overlap(inst, model.overlap_embeddings(decode, 0, win.overlap_with_prev),
                               /*is_start=*/true);
      if (wi + 1 < windows.size()) {
        const int next_start = windows[wi + 1].start;
        const int shared = win.start + win.length - next_start;
        if (shared > 0)
          detail::attach_overlap(
              inst, model.overlap_embeddings(decode, next_start - win.start, win.length),
              /*is_start=*/false);
      }
    }

    std::vector<int> ids(inst.instances.size(), -1);
    if (wi == 0) {
      for (std::size_t j = 0; j < inst.instances.size(); ++j) ids[j] = acc.new_track();
    } else {
      auto matched = match_clips(prev, inst, cfg.match);
      for (std::size_t j = 0; j < inst.instances.size(); ++j)
        ids[j] = matched[j] >= 0 ? prev_track_ids[static_cast<std::size_t>(matched[j])]
                                 : acc.new_track();
    }
    for (std::size_t j = 0; j < inst.instances.size(); ++j)
      acc.merge(ids[j], win, inst.instances[j]);

    prev = std::move(inst);
    prev_track_ids = std::move(ids);
  }
  return acc.finalize(video_id);
}

// Track memory for the online baseline: every slot keeps the running average
// of its last `capacity` matched frame embeddings; each new frame's instances
// are Hungarian-matched against those averages by cosine similarity.
class OnlineTrackBuffer {
 public:
  explicit OnlineTrackBuffer(int capacity) : capacity_(capacity) {
    check_contract(capacity >= 1, "OnlineTrackBuffer: capacity must be >= 1");
  }

  int track_count() const { return static_cast<int>(slots_.size()); }

  // Returns the matched slot per instance; unmatched instances open new slots.
  std::vector<int> match_and_update(const std::vector<std::vector<float>>& embeddings) {
    const int np = track_count();
    const int nn = static_cast<int>(embeddings.size());
    std::vector<int> assigned(static_cast<std::size_t>(nn), -1);
    if (np > 0 && nn > 0) {
      std::vector<double> sim(static_cast<std::size_t>(np) * nn);
      for (int i = 0; i < np; ++i) {
        const auto avg = average(i);
        for (int j = 0; j < nn; ++j)
          sim[static_cast<std::size_t>(i) * nn + j] =
              detail::cosine(avg, embeddings[static_cast<std::size_t>(j)]);
      }
      auto rows = solve_assignment_max(sim, np, nn);
      for (int i = 0; i < np; ++i)
        if (rows[static_cast<std::size_t>(i)] >= 0)
          assigned[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])] = i;
    }
    for (int j = 0; j < nn; ++j) {
      if (assigned[static_cast<std::size_t>(j)] < 0) {
        slots_.emplace_back();
        assigned[static_cast<std::size_t>(j)] = static_cast<int>(slots_.size()) - 1;
      }
      auto& history = slots_[static_cast<std::size_t>(assigned[static_cast<std::size_t>(j)])];
      history.push_back(embeddings[static_cast<std::size_t>(j)]);
      if (static_cast<int>(history.size()) > capacity_) history.pop_front();
    }
    return assigned;
  }

  std::vector<float> average(int slot) const {
    const auto& history = slots_[static_cast<std::size_t>(slot)];
    std::vector<float> avg(history.front().size(), 0.0f);
    for (const auto& e : history)
      for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += e[i];
    const float inv = 1.0f / static_cast<float>(history.size());
    for (auto& v : avg) v *= inv;
    return avg;
  }

 private:
  int capacity_;
  std::vector<std::deque<std::vector<float>>> slots_;
};

// Online baseline: per-frame decoding with an embedding track buffer.
inline TrackSet run_online_buffer(const Tensor& video, const VideoModel& model, int buffer,
                                  int top_k, const std::string& video_id = "") {
  const int total = video.dim(0), h = video.dim(2), w = video.dim(3);
  TrackAccumulator acc(total, h, w);
  OnlineTrackBuffer memory(buffer);
  std::vector<int> slot_to_id;

  for (int f = 0; f < total; ++f) {
    ClipWindow win;
    win.start = f;
    win.length = 1;
    auto decode = model.forward(detail::slice_frames(video, f, 1));
    auto inst = select_instances(decode, std::min(top_k, model.config().queries), h, w);
    inst.window = win;

    std::vector<std::vector<float>> embeddings;
    for (const auto& instance : inst.instances) embeddings.push_back(instance.embedding);
    auto slots = memory.match_and_update(embeddings);
    for (std::size_t j = 0; j < inst.instances.size(); ++j) {
      const int slot = slots[j];
      if (slot >= static_cast<int>(slot_to_id.size())) slot_to_id.push_back(acc.new_track());
      acc.merge(slot_to_id[static_cast<std::size_t>(slot)], win, inst.instances[j]);
    }
  }
  return acc.finalize(video_id);
}

}  // namespace novis

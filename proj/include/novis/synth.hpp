#pragma once

// Synthetic video generator: moving geometric shapes (disc, square,
// triangle) with persistent identities, z-order occlusion, and optional
// scripted full-occlusion crossings. Also the on-disk dataset layout
// (manifest.json + P6 frames + RLE ground-truth masks) and the training
// clip sampler with reversal/flip augmentation.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "novis/clip.hpp"
#include "novis/ppm.hpp"
#include "novis/rle.hpp"
#include "novis/rng.hpp"
#include "novis/tensor.hpp"

namespace novis {

inline const std::vector<std::string>& shape_class_names() {
  static const std::vector<std::string> names = {"disc", "square", "triangle"};
  return names;
}

struct VideoSpec {
  int frames = 24;
  int height = 64, width = 64;
  int classes = 3;       // shape classes drawn from the first `classes` names
  int min_objects = 1, max_objects = 6;
  bool scripted_crossing = false;  // objects 0 (front) and 1 (back) fully cross
  bool static_objects = false;     // degenerate zero-motion trajectories
};

struct VideoSample {
  std::vector<ImageU8> frames;
  ClipGroundTruth gt;  // full-video ground truth, identities = object index
};

namespace detail {

struct MovingObject {
  int class_id = 0;
  double size = 8;
  std::array<std::uint8_t, 3> color{200, 200, 200};
  // linear motion between endpoints, or a sinusoidal sweep around a center
  bool sinusoidal = false;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double amp_x = 0, amp_y = 0, freq = 1, phase = 0;

  std::pair<double, double> position(int t, int frames) const {
    const double u = frames > 1 ? static_cast<double>(t) / (frames - 1) : 0.0;
    if (!sinusoidal) return {x0 + (x1 - x0) * u, y0 + (y1 - y0) * u};
    const double arg = 6.283185307179586 * freq * u + phase;
    return {x0 + amp_x * std::sin(arg), y0 + amp_y * std::cos(arg)};
  }

  bool contains(double px, double py, double cx, double cy) const {
    const double dx = px - cx, dy = py - cy;
    switch (class_id) {
      case 0:  // disc
        return dx * dx + dy * dy <= size * size;
      case 1:  // axis-aligned square
        return std::abs(dx) <= size && std::abs(dy) <= size;
      default: {  // upward triangle with circumradius `size`
        const double s = 0.8660254037844386;  // sin 60
        const double ax = 0, ay = -size;
        const double bx = -s * size, by = size / 2;
        const double cx2 = s * size, cy2 = size / 2;
        auto side = [&](double x1_, double y1_, double x2_, double y2_) {
          return (x2_ - x1_) * (dy - y1_) - (y2_ - y1_) * (dx - x1_);
        };
        const double d1 = side(ax, ay, bx, by);
        const double d2 = side(bx, by, cx2, cy2);
        const double d3 = side(cx2, cy2, ax, ay);
        const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
        const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
        return !(has_neg && has_pos);
      }
    }
  }
};

inline std::array<std::uint8_t, 3> hsv_color(double hue) {
  const double s = 0.85, v = 0.95;
  const double h = hue * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r, g, b;
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {static_cast<std::uint8_t>(r * 255), static_cast<std::uint8_t>(g * 255),
          static_cast<std::uint8_t>(b * 255)};
}

}  // namespace detail

// Deterministic in (spec, seed). Lower object index = closer to the camera;
// ground-truth masks keep only visible pixels, so occluded regions vanish
// from the back object while its identity persists.
inline VideoSample generate_video(const VideoSpec& spec, std::uint64_t seed) {
  check_contract(spec.classes >= 1 && spec.classes <= 3,
                 "generate_video: classes must be between 1 and 3");
  check_contract(spec.frames >= 1, "generate_video: need at least one frame");
  check_contract(spec.min_objects >= 1 && spec.max_objects <= 6 &&
                     spec.min_objects <= spec.max_objects,
                 "generate_video: object count must lie in 1..6");
  Rng rng(seed);
  const int n_obj = spec.scripted_crossing
                        ? std::max(2, rng.uniform_int(spec.min_objects, spec.max_objects))
                        : rng.uniform_int(spec.min_objects, spec.max_objects);

  std::vector<detail::MovingObject> objects;
  for (int i = 0; i < n_obj; ++i) {
    detail::MovingObject obj;
    obj.class_id = rng.uniform_int(0, spec.classes - 1);
    obj.size = rng.uniform(5.5, 11.0);
    obj.color = detail::hsv_color(rng.uniform());
    const double margin = obj.size + 1;
    auto in_x = [&] { return rng.uniform(margin, spec.width - margin); };
    auto in_y = [&] { return rng.uniform(margin, spec.height - margin); };
    if (rng.bernoulli(0.5)) {
      obj.sinusoidal = true;
      obj.x0 = in_x();
      obj.y0 = in_y();
      const double bound_x = std::min(obj.x0, spec.width - obj.x0) - margin + 1;
      const double bound_y = std::min(obj.y0, spec.height - obj.y0) - margin + 1;
      obj.amp_x = rng.uniform(2.0, std::max(2.5, std::min(bound_x, 13.0)));
      obj.amp_y = rng.uniform(2.0, std::max(2.5, std::min(bound_y, 13.0)));
      obj.freq = rng.uniform(0.25, 0.8);
      obj.phase = rng.uniform(0, 6.28);
    } else {
      obj.x0 = in_x();
      obj.y0 = in_y();
      obj.x1 = in_x();
      obj.y1 = in_y();
    }
    if (spec.static_objects) {
      obj.sinusoidal = false;
      obj.x1 = obj.x0;
      obj.y1 = obj.y0;
    }
    objects.push_back(obj);
  }

  if (spec.scripted_crossing) {
    // Objects 0 (front square) and 1 (back) swap sides along a shared line
    // and coincide exactly at the middle frame, where the front box fully
    // contains the back shape.
    const double t_mid = (spec.frames - 1) / 2.0;
    const double xc = spec.width / 2.0 + rng.uniform(-4, 4);
    const double yc = rng.uniform(18.0, spec.height - 18.0);
    const double v0 = rng.uniform(1.9, 2.3), v1 = rng.uniform(1.9, 2.3);
    auto& front = objects[0];
    auto& back = objects[1];
    front.class_id = 1;  // square, the only shape whose box equals its extent
    front.size = rng.uniform(9.5, 11.0);
    back.size = front.size - 4.0;
    front.sinusoidal = back.sinusoidal = false;
    front.x0 = xc - v0 * t_mid;
    front.x1 = xc + v0 * (spec.frames - 1 - t_mid);
    front.y0 = front.y1 = yc;
    back.x0 = xc + v1 * t_mid;
    back.x1 = xc - v1 * (spec.frames - 1 - t_mid);
    back.y0 = back.y1 = yc;
  }

  VideoSample sample;
  sample.gt.frames = spec.frames;
  sample.gt.height = spec.height;
  sample.gt.width = spec.width;
  for (int i = 0; i < n_obj; ++i) {
    ClipObject obj;
    obj.class_id = objects[static_cast<std::size_t>(i)].class_id;
    obj.identity = i;
    obj.masks = BitVolume(spec.frames, spec.height, spec.width);
    sample.gt.objects.push_back(std::move(obj));
  }

  const std::array<std::uint8_t, 3> bg = {28, 28, 32};
  for (int t = 0; t < spec.frames; ++t) {
    ImageU8 img;
    img.height = spec.height;
    img.width = spec.width;
    img.rgb.assign(static_cast<std::size_t>(spec.height) * spec.width * 3, 0);
    std::vector<std::pair<double, double>> pos;
    for (const auto& o : objects) pos.push_back(o.position(t, spec.frames));
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        int owner = -1;
        for (int i = 0; i < n_obj; ++i) {
          if (objects[static_cast<std::size_t>(i)].contains(
                  px, py, pos[static_cast<std::size_t>(i)].first,
                  pos[static_cast<std::size_t>(i)].second)) {
            owner = i;
            break;  // lower index = front
          }
        }
        const auto& color = owner >= 0 ? objects[static_cast<std::size_t>(owner)].color : bg;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[static_cast<std::size_t>(c)];
        if (owner >= 0)
          sample.gt.objects[static_cast<std::size_t>(owner)].masks.set(t, y, x, true);
      }
    sample.frames.push_back(std::move(img));
  }

  for (const auto& obj : sample.gt.objects)
    check_contract(obj.masks.popcount() > 0,
                   "generate_video: object " + std::to_string(obj.identity) +
                       " is never visible");
  return sample;
}

// ---------------------------------------------------------------------------
// Dataset on disk
// ---------------------------------------------------------------------------

struct DatasetObjectEntry {
  int id = 0;
  int class_id = 0;
  std::string rle_path;
};

struct DatasetVideoEntry {
  std::string id;
  int frames = 0, height = 0, width = 0;
  std::vector<std::string> frame_paths;
  std::vector<DatasetObjectEntry> objects;
};

struct Dataset {
  std::string root;
  std::vector<std::string> class_names;
  std::vector<DatasetVideoEntry> videos;
};

inline void save_video(Dataset& ds, const std::string& video_id, const VideoSample& sample) {
  namespace fs = std::filesystem;
  DatasetVideoEntry entry;
  entry.id = video_id;
  entry.frames = sample.gt.frames;
  entry.height = sample.gt.height;
  entry.width = sample.gt.width;
  fs::create_directories(fs::path(ds.root) / "frames" / video_id);
  fs::create_directories(fs::path(ds.root) / "masks" / video_id);
  char name[32];
  for (int t = 0; t < entry.frames; ++t) {
    std::snprintf(name, sizeof(name), "%06d.ppm", t);
    const std::string rel = "frames/" + video_id + "/" + name;
    save_ppm((fs::path(ds.root) / rel).string(), sample.frames[static_cast<std::size_t>(t)]);
    entry.frame_paths.push_back(rel);
  }
  for (const auto& obj : sample.gt.objects) {
    const std::string rel = "masks/" + video_id + "/" + std::to_string(obj.identity) + ".rle";
    save_rle((fs::path(ds.root) / rel).string(), obj.masks);
    entry.objects.push_back({obj.identity, obj.class_id, rel});
  }
  ds.videos.push_back(std::move(entry));
}

inline void save_manifest(const Dataset& ds) {
  nlohmann::json j;
  j["format"] = "novis-dataset-v1";
  j["classes"] = ds.class_names;
  auto& vids = j["videos"] = nlohmann::json::array();
  for (const auto& v : ds.videos) {
    nlohmann::json jv;
    jv["id"] = v.id;
    jv["frames"] = v.frames;
    jv["height"] = v.height;
    jv["width"] = v.width;
    jv["frame_files"] = v.frame_paths;
    auto& objs = jv["objects"] = nlohmann::json::array();
    for (const auto& o : v.objects)
      objs.push_back({{"id", o.id}, {"class", o.class_id}, {"rle", o.rle_path}});
    vids.push_back(std::move(jv));
  }
  std::ofstream out(std::filesystem::path(ds.root) / "manifest.json");
  check_contract(out.good(), "save_manifest: cannot open manifest in " + ds.root);
  out << j.dump(2) << "\n";
}

inline Dataset load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(root) / "manifest.json";
  std::ifstream in(manifest_path);
  check_contract(in.good(), "load_dataset: missing manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw contract_error("load_dataset: malformed manifest " + manifest_path.string() + ": " +
                         e.what());
  }
  check_contract(j.value("format", "") == "novis-dataset-v1",
                 "load_dataset: unknown format in " + manifest_path.string());
  Dataset ds;
  ds.root = root;
  ds.class_names = j.at("classes").get<std::vector<std::string>>();
  for (const auto& jv : j.at("videos")) {
    DatasetVideoEntry v;
    v.id = jv.at("id").get<std::string>();
    v.frames = jv.at("frames").get<int>();
    v.height = jv.at("height").get<int>();
    v.width = jv.at("width").get<int>();
    v.frame_paths = jv.at("frame_files").get<std::vector<std::string>>();
    check_contract(static_cast<int>(v.frame_paths.size()) == v.frames,
                   "load_dataset: frame count mismatch for video " + v.id);
    for (const auto& p : v.frame_paths)
      check_contract(fs::exists(fs::path(root) / p),
                     "load_dataset: missing frame file " + p + " for video " + v.id);
    for (const auto& jo : jv.at("objects")) {
      DatasetObjectEntry o;
      o.id = jo.at("id").get<int>();
      o.class_id = jo.at("class").get<int>();
      o.rle_path = jo.at("rle").get<std::string>();
      check_contract(fs::exists(fs::path(root) / o.rle_path),
                     "load_dataset: missing mask file " + o.rle_path + " for video " + v.id);
      v.objects.push_back(std::move(o));
    }
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

inline std::vector<ImageU8> load_video_frames(const Dataset& ds, const DatasetVideoEntry& v) {
  std::vector<ImageU8> frames;
  frames.reserve(v.frame_paths.size());
  for (const auto& p : v.frame_paths)
    frames.push_back(load_ppm((std::filesystem::path(ds.root) / p).string()));
  return frames;
}

inline ClipGroundTruth load_video_gt(const Dataset& ds, const DatasetVideoEntry& v) {
  ClipGroundTruth gt;
  gt.frames = v.frames;
  gt.height = v.height;
  gt.width = v.width;
  for (const auto& o : v.objects) {
    ClipObject obj;
    obj.class_id = o.class_id;
    obj.identity = o.id;
    obj.masks = load_rle((std::filesystem::path(ds.root) / o.rle_path).string(), v.frames,
                         v.height, v.width);
    gt.objects.push_back(std::move(obj));
  }
  return gt;
}

// [T x 3 x H x W] float tensor in [0, 1] from interleaved 8-bit frames.
inline Tensor frames_to_tensor(const std::vector<ImageU8>& frames) {
  check_contract(!frames.empty(), "frames_to_tensor: no frames");
  const int t = static_cast<int>(frames.size());
  const int h = frames[0].height, w = frames[0].width;
  Tensor out({t, 3, h, w});
  for (int ti = 0; ti < t; ++ti)
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          out.data()[((static_cast<long long>(ti) * 3 + c) * h + y) * w + x] =
              static_cast<float>(frames[static_cast<std::size_t>(ti)].at(y, x, c)) / 255.0f;
  return out;
}

// ---------------------------------------------------------------------------
// Training clip sampler
// ---------------------------------------------------------------------------

// Draws T-1 companion frames without replacement from +-range around a
// uniform reference frame (window widened minimally when too small), sorts
// ascending, restricts ground truth to objects visible in the sampled
// frames, and optionally applies frame-reversal / horizontal-flip
// augmentation, each with probability one half.
inline ClipBatch sample_training_clip(const VideoSample& video, int clip_len, int range_r,
                                      Rng& rng, bool augment = true) {
  const int total = video.gt.frames;
  check_contract(total >= clip_len, "sample_training_clip: video shorter than clip");
  const int ref = rng.uniform_int(0, total - 1);
  int r = range_r;
  auto pool_size = [&](int rr) {
    return std::min(total - 1, ref + rr) - std::max(0, ref - rr);
  };
  while (pool_size(r) < clip_len - 1) ++r;  // widen to the minimal feasible window

  std::vector<int> pool;
  for (int f = std::max(0, ref - r); f <= std::min(total - 1, ref + r); ++f)
    if (f != ref) pool.push_back(f);
  std::vector<int> picked = {ref};
  for (int i = 0; i < clip_len - 1; ++i) {
    const int j = rng.uniform_int(i, static_cast<int>(pool.size()) - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    picked.push_back(pool[static_cast<std::size_t>(i)]);
  }
  std::sort(picked.begin(), picked.end());

  const bool reverse = augment && rng.bernoulli(0.5);
  const bool flip = augment && rng.bernoulli(0.5);
  if (reverse) std::reverse(picked.begin(), picked.end());

  const int h = video.gt.height, w = video.gt.width;
  ClipBatch clip;
  clip.frame_indices = picked;
  clip.gt.frames = clip_len;
  clip.gt.height = h;
  clip.gt.width = w;
  clip.frames = Tensor({clip_len, 3, h, w});
  for (int i = 0; i < clip_len; ++i) {
    const auto& img = video.frames[static_cast<std::size_t>(picked[static_cast<std::size_t>(i)])];
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = flip ? w - 1 - x : x;
          clip.frames.data()[((static_cast<long long>(i) * 3 + c) * h + y) * w + x] =
              static_cast<float>(img.at(y, sx, c)) / 255.0f;
        }
  }
  for (const auto& obj : video.gt.objects) {
    BitVolume vol(clip_len, h, w);
    bool visible = false;
    for (int i = 0; i < clip_len; ++i)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int sx = flip ? w - 1 - x : x;
          if (obj.masks.get(picked[static_cast<std::size_t>(i)], y, sx)) {
            vol.set(i, y, x, true);
            visible = true;
          }
        }
    if (visible) {
      ClipObject co;
      co.class_id = obj.class_id;
      co.identity = obj.identity;
      co.masks = std::move(vol);
      clip.gt.objects.push_back(std::move(co));
    }
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Whole-dataset generation
// ---------------------------------------------------------------------------

struct GenConfig {
  int train_videos = 40;
  int val_videos = 12;
  int frames = 24;
  int height = 64, width = 64;
  int classes = 3;
  int min_objects = 1, max_objects = 6;
  int crossing_every = 3;  // every k-th video gets a scripted full crossing
  std::uint64_t seed = 1;
};

inline Dataset generate_split(const GenConfig& cfg, const std::string& root,
                              const std::string& prefix, int count,
                              std::uint64_t seed_offset) {
  Dataset ds;
  ds.root = root;
  ds.class_names.assign(shape_class_names().begin(),
                        shape_class_names().begin() + cfg.classes);
  std::filesystem::create_directories(root);
  for (int i = 0; i < count; ++i) {
    VideoSpec spec;
    spec.frames = cfg.frames;
    spec.height = cfg.height;
    spec.width = cfg.width;
    spec.classes = cfg.classes;
    spec.min_objects = cfg.min_objects;
    spec.max_objects = cfg.max_objects;
    spec.scripted_crossing = cfg.crossing_every > 0 && i % cfg.crossing_every == 0;
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%03d", prefix.c_str(), i);
    const std::uint64_t video_seed =
        cfg.seed * 0x9e3779b97f4a7c15ULL + seed_offset + static_cast<std::uint64_t>(i);
    save_video(ds, name, generate_video(spec, video_seed));
  }
  save_manifest(ds);
  return ds;
}

}  // namespace novis

// novis: synthetic-video instance segmentation engine.
//   gen    - generate a synthetic dataset (train + val splits)
//   train  - train a model on a dataset split
//   infer  - run near-online / online tracking and serialize track sets
//   eval   - score predictions against dataset ground truth
//   sweep  - grid of (clip length, stride, mode) x seeds to CSV
//
// All commands are deterministic under a fixed --seed. A single flat JSON
// config file can provide any option; command-line flags override it.
// Exit codes: 0 success, 2 usage error, 1 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "novis/checkpoint.hpp"
#include "novis/metrics.hpp"
#include "novis/model.hpp"
#include "novis/synth.hpp"
#include "novis/tracker.hpp"
#include "novis/trackset_io.hpp"
#include "novis/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in.good()) throw CLI::ValidationError("--config", "cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CLI::ValidationError("--config", std::string("malformed JSON config: ") + e.what());
  }
  if (!j.is_object()) throw CLI::ValidationError("--config", "config must be a JSON object");
  return j;
}

// Applies a flat config key when the option was not given on the command line.
template <typename T>
void merge_key(const json& cfg, const CLI::Option* opt, const std::string& key, T& value) {
  if (opt != nullptr && opt->count() > 0) return;
  if (cfg.contains(key)) value = cfg.at(key).get<T>();
}

int thread_budget() {
  const char* env = std::getenv("NOVIS_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n >= 1 ? n : 1;
}

struct ModeSpec {
  bool online = false;       // pure per-frame pipeline via the track buffer
  int buffer = 1;            // buffer length for online_buffer:B
  novis::MatchMode match = novis::MatchMode::embedding;
};

ModeSpec parse_mode(const std::string& mode) {
  if (mode == "embedding") return {false, 1, novis::MatchMode::embedding};
  if (mode == "overlap") return {false, 1, novis::MatchMode::overlap_embedding};
  if (mode == "heuristic") return {false, 1, novis::MatchMode::heuristic};
  if (mode == "online") return {true, 1, novis::MatchMode::embedding};
  if (mode.rfind("online_buffer:", 0) == 0) {
    const int b = std::atoi(mode.c_str() + 14);
    if (b < 1) throw CLI::ValidationError("--mode", "online_buffer needs a positive length");
    return {true, b, novis::MatchMode::embedding};
  }
  throw CLI::ValidationError(
      "--mode", "unknown mode '" + mode +
                    "' (expected embedding|overlap|heuristic|online|online_buffer:B)");
}

novis::TrackSet run_mode(const novis::Tensor& video, const novis::VideoModel& model,
                         const ModeSpec& spec, int clip_len, int stride, int top_k,
                         const std::string& video_id, double min_similarity = -1e30,
                         bool match_all_queries = false) {
  if (match_all_queries) top_k = model.config().queries;
  if (spec.online)
    return novis::run_online_buffer(video, model, spec.buffer, top_k, video_id);
  novis::TrackerConfig cfg;
  cfg.clip_len = clip_len;
  cfg.stride = stride;
  cfg.top_k = top_k;
  cfg.match.mode = spec.match;
  cfg.match.min_similarity = min_similarity;
  return novis::run_near_online(video, model, cfg, video_id);
}

std::vector<novis::TrackSet> dataset_ground_truth(const novis::Dataset& ds) {
  std::vector<novis::TrackSet> out;
  for (const auto& v : ds.videos) {
    auto gt = novis::load_video_gt(ds, v);
    novis::TrackSet ts;
    ts.video_id = v.id;
    ts.frames = v.frames;
    ts.height = v.height;
    ts.width = v.width;
    for (auto& obj : gt.objects) {
      novis::FinalizedTrack t;
      t.id = obj.identity;
      t.class_id = obj.class_id;
      t.score = 1.0;
      t.masks = std::move(obj.masks);
      ts.tracks.push_back(std::move(t));
    }
    out.push_back(std::move(ts));
  }
  return out;
}

// ---- gen -------------------------------------------------------------------

int cmd_gen(const json& cfg, const std::string& out_dir, novis::GenConfig gen,
            const std::map<std::string, const CLI::Option*>& opts) {
  merge_key(cfg, opts.at("train-videos"), "train_videos", gen.train_videos);
  merge_key(cfg, opts.at("val-videos"), "val_videos", gen.val_videos);
  merge_key(cfg, opts.at("frames"), "frames", gen.frames);
  merge_key(cfg, opts.at("classes"), "classes", gen.classes);
  merge_key(cfg, opts.at("seed"), "seed", gen.seed);
  if (gen.classes < 1 || gen.classes > 3)
    throw CLI::ValidationError("--classes", "must be between 1 and 3");

  auto train = novis::generate_split(gen, (fs::path(out_dir) / "train").string(), "train",
                                     gen.train_videos, 0);
  auto val = novis::generate_split(gen, (fs::path(out_dir) / "val").string(), "val",
                                   gen.val_videos, 1u << 20);
  json summary;
  summary["train_videos"] = train.videos.size();
  summary["val_videos"] = val.videos.size();
  summary["frames"] = gen.frames;
  summary["resolution"] = {gen.height, gen.width};
  summary["classes"] = train.class_names;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const json& cfg, const std::string& dataset_dir, const std::string& out_dir,
              bool force, novis::ModelConfig mc, novis::TrainConfig tc,
              const std::map<std::string, const CLI::Option*>& opts) {
  merge_key(cfg, opts.at("steps"), "steps", tc.steps);
  merge_key(cfg, opts.at("clip-len"), "clip_len", tc.clip_len);
  merge_key(cfg, opts.at("lr"), "lr", tc.lr);
  merge_key(cfg, opts.at("seed"), "seed", tc.seed);
  merge_key(cfg, nullptr, "sample_range", tc.sample_range);
  merge_key(cfg, nullptr, "weight_decay", tc.weight_decay);
  merge_key(cfg, nullptr, "clip_norm", tc.clip_norm);
  merge_key(cfg, nullptr, "hidden", mc.hidden);
  merge_key(cfg, nullptr, "layers", mc.layers);
  merge_key(cfg, nullptr, "queries", mc.queries);
  merge_key(cfg, nullptr, "scales", mc.scales);
  merge_key(cfg, nullptr, "classes", mc.classes);
  merge_key(cfg, nullptr, "t_max", mc.t_max);
  merge_key(cfg, nullptr, "heads", mc.heads);
  merge_key(cfg, nullptr, "attend_mask_scale", mc.attend_mask_scale);
  mc.seed = tc.seed;

  if (fs::exists(fs::path(out_dir) / "config.json") && !force)
    throw novis::contract_error("checkpoint already exists at " + out_dir +
                                " (pass --force to overwrite)");

  auto dataset = novis::load_dataset(dataset_dir);
  auto videos = novis::load_video_samples(dataset);
  novis::VideoModel model(mc);

  fs::create_directories(out_dir);
  std::ofstream log(fs::path(out_dir) / "train_log.jsonl");
  auto records = novis::train_model(model, videos, tc, &log);
  novis::save_checkpoint(out_dir, model);

  json summary;
  summary["steps"] = tc.steps;
  summary["final_loss"] = records.empty() ? 0.0 : records.back().loss.total;
  summary["checkpoint"] = out_dir;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---- infer -----------------------------------------------------------------

int cmd_infer(const json& cfg, const std::string& ckpt_dir, const std::string& dataset_dir,
              const std::string& out_dir, int clip_len, int stride, std::string mode,
              int top_k, const std::map<std::string, const CLI::Option*>& opts) {
  merge_key(cfg, opts.at("clip-len"), "clip_len", clip_len);
  merge_key(cfg, opts.at("stride"), "stride", stride);
  merge_key(cfg, opts.at("mode"), "mode", mode);
  merge_key(cfg, opts.at("top-k"), "top_k", top_k);
  double min_similarity = -1e30;
  bool match_all_queries = false;
  merge_key(cfg, nullptr, "min_similarity", min_similarity);
  merge_key(cfg, nullptr, "match_all_queries", match_all_queries);
  if (stride < 1 || stride > clip_len)
    throw CLI::ValidationError("--stride", "need 1 <= stride <= clip length");
  const ModeSpec spec = parse_mode(mode);

  auto model = novis::load_checkpoint(ckpt_dir);
  auto dataset = novis::load_dataset(dataset_dir);
  fs::create_directories(out_dir);
  for (const auto& v : dataset.videos) {
    auto frames = novis::frames_to_tensor(novis::load_video_frames(dataset, v));
    auto ts = run_mode(frames, model, spec, clip_len, stride, top_k, v.id, min_similarity,
                       match_all_queries);
    novis::save_trackset((fs::path(out_dir) / v.id).string(), ts);
  }
  std::cout << "wrote " << dataset.videos.size() << " track sets to " << out_dir << "\n";
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& pred_dir, const std::string& dataset_dir,
             const std::string& out_json, const std::string& out_csv) {
  auto dataset = novis::load_dataset(dataset_dir);
  auto gts = dataset_ground_truth(dataset);
  std::vector<novis::TrackSet> preds;
  for (const auto& v : dataset.videos) {
    const auto dir = fs::path(pred_dir) / v.id;
    if (fs::exists(dir / "manifest.json")) {
      preds.push_back(novis::load_trackset(dir.string()));
    } else {
      novis::TrackSet empty;
      empty.video_id = v.id;
      empty.frames = v.frames;
      empty.height = v.height;
      empty.width = v.width;
      preds.push_back(std::move(empty));
    }
  }
  auto report = novis::evaluate_ap(preds, gts);
  const json j = novis::report_to_json(report);
  std::cout << j.dump(2) << "\n";
  if (!out_json.empty()) {
    std::ofstream out(out_json);
    out << j.dump(2) << "\n";
  }
  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    out << novis::report_csv_fields() << "\n" << novis::report_csv_row(report) << "\n";
  }
  return 0;
}

// ---- sweep -----------------------------------------------------------------

struct GridEntry {
  int clip_len = 0;
  int stride = 0;
  std::string mode;
};

std::vector<GridEntry> parse_grid(const std::string& grid) {
  std::vector<GridEntry> out;
  std::stringstream ss(grid);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    GridEntry e;
    const auto p1 = item.find(':');
    const auto p2 = item.find(':', p1 == std::string::npos ? p1 : p1 + 1);
    if (p1 == std::string::npos || p2 == std::string::npos)
      throw CLI::ValidationError("--grid", "entries must look like T:S:mode");
    e.clip_len = std::atoi(item.substr(0, p1).c_str());
    e.stride = std::atoi(item.substr(p1 + 1, p2 - p1 - 1).c_str());
    e.mode = item.substr(p2 + 1);
    if (e.clip_len < 1 || e.stride < 1 || e.stride > e.clip_len)
      throw CLI::ValidationError("--grid", "need 1 <= S <= T in entry '" + item + "'");
    parse_mode(e.mode);  // validates
    out.push_back(e);
  }
  if (out.empty()) throw CLI::ValidationError("--grid", "empty grid");
  return out;
}

int cmd_sweep(const std::vector<std::string>& checkpoints, const std::string& dataset_dir,
              const std::string& grid_str, const std::string& out_csv, int top_k,
              std::vector<int> seeds) {
  auto grid = parse_grid(grid_str);
  if (seeds.empty())
    for (std::size_t i = 0; i < checkpoints.size(); ++i) seeds.push_back(static_cast<int>(i));
  if (seeds.size() != checkpoints.size())
    throw CLI::ValidationError("--seeds", "one seed label per checkpoint");

  auto dataset = novis::load_dataset(dataset_dir);
  auto gts = dataset_ground_truth(dataset);
  std::vector<novis::VideoModel> models;
  for (const auto& c : checkpoints) models.push_back(novis::load_checkpoint(c));
  std::vector<novis::Tensor> videos;
  for (const auto& v : dataset.videos)
    videos.push_back(novis::frames_to_tensor(novis::load_video_frames(dataset, v)));

  struct Job {
    const GridEntry* entry;
    std::size_t model_index;
    int seed;
  };
  std::vector<Job> jobs;
  for (const auto& e : grid)
    for (std::size_t m = 0; m < models.size(); ++m)
      jobs.push_back({&e, m, seeds[m]});

  std::vector<std::string> rows(jobs.size());
  const int workers = std::min<int>(thread_budget(), static_cast<int>(jobs.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      const ModeSpec spec = parse_mode(job.entry->mode);
      std::vector<novis::TrackSet> preds;
      for (std::size_t v = 0; v < videos.size(); ++v)
        preds.push_back(run_mode(videos[v], models[job.model_index], spec,
                                 job.entry->clip_len, job.entry->stride, top_k,
                                 dataset.videos[v].id));
      auto report = novis::evaluate_ap(preds, gts);
      std::ostringstream row;
      row << job.entry->clip_len << "," << job.entry->stride << "," << job.entry->mode << ","
          << job.seed << "," << novis::report_csv_row(report);
      rows[i] = row.str();
    }
  };
  std::vector<std::thread> pool;
  for (int wkr = 0; wkr < workers; ++wkr) pool.emplace_back(worker);
  for (auto& th : pool) th.join();

  std::ostringstream csv;
  csv << "T,S,mode,seed," << novis::report_csv_fields() << "\n";
  for (const auto& row : rows) csv << row << "\n";
  if (out_csv.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(out_csv);
    out << csv.str();
    std::cout << "wrote " << rows.size() << " rows to " << out_csv << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"novis: near-online video instance segmentation on synthetic videos"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config file; flags override its keys");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out;
  novis::GenConfig gen_cfg;
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  std::map<std::string, const CLI::Option*> gen_opts;
  gen_opts["train-videos"] = gen->add_option("--train-videos", gen_cfg.train_videos);
  gen_opts["val-videos"] = gen->add_option("--val-videos", gen_cfg.val_videos);
  gen_opts["frames"] = gen->add_option("--frames", gen_cfg.frames);
  gen_opts["classes"] = gen->add_option("--classes", gen_cfg.classes);
  gen_opts["seed"] = gen->add_option("--seed", gen_cfg.seed);

  // train
  auto* train = app.add_subcommand("train", "train a model");
  std::string train_dataset, train_out;
  bool train_force = false;
  novis::ModelConfig model_cfg;
  novis::TrainConfig train_cfg;
  train->add_option("--dataset", train_dataset, "training split directory")->required();
  train->add_option("--out", train_out, "checkpoint output directory")->required();
  train->add_flag("--force", train_force, "overwrite an existing checkpoint");
  std::map<std::string, const CLI::Option*> train_opts;
  train_opts["steps"] = train->add_option("--steps", train_cfg.steps);
  train_opts["clip-len"] = train->add_option("--clip-len", train_cfg.clip_len);
  train_opts["lr"] = train->add_option("--lr", train_cfg.lr);
  train_opts["seed"] = train->add_option("--seed", train_cfg.seed);

  // infer
  auto* infer = app.add_subcommand("infer", "run tracking and write track sets");
  std::string infer_ckpt, infer_dataset, infer_out, infer_mode = "overlap";
  int infer_clip_len = 4, infer_stride = 2, infer_top_k = 10;
  infer->add_option("--checkpoint", infer_ckpt)->required();
  infer->add_option("--dataset", infer_dataset)->required();
  infer->add_option("--out", infer_out)->required();
  std::map<std::string, const CLI::Option*> infer_opts;
  infer_opts["clip-len"] = infer->add_option("--clip-len", infer_clip_len);
  infer_opts["stride"] = infer->add_option("--stride", infer_stride);
  infer_opts["mode"] = infer->add_option("--mode", infer_mode);
  infer_opts["top-k"] = infer->add_option("--top-k", infer_top_k);

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions against ground truth");
  std::string eval_pred, eval_dataset, eval_json, eval_csv;
  eval->add_option("--pred", eval_pred)->required();
  eval->add_option("--dataset", eval_dataset)->required();
  eval->add_option("--out", eval_json, "report JSON path");
  eval->add_option("--csv", eval_csv, "single-row CSV path");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "evaluate a (T,S,mode) grid to CSV");
  std::vector<std::string> sweep_ckpts;
  std::string sweep_dataset, sweep_grid, sweep_out;
  std::vector<int> sweep_seeds;
  int sweep_top_k = 10;
  sweep->add_option("--checkpoint", sweep_ckpts, "one or more checkpoints")->required();
  sweep->add_option("--dataset", sweep_dataset)->required();
  sweep->add_option("--grid", sweep_grid, "comma list of T:S:mode entries")->required();
  sweep->add_option("--out", sweep_out, "CSV output path (stdout when omitted)");
  sweep->add_option("--seeds", sweep_seeds, "seed labels, one per checkpoint");
  sweep->add_option("--top-k", sweep_top_k);

  try {
    app.parse(argc, argv);
    const json cfg = load_config_file(config_path);
    if (gen->parsed()) return cmd_gen(cfg, gen_out, gen_cfg, gen_opts);
    if (train->parsed())
      return cmd_train(cfg, train_dataset, train_out, train_force, model_cfg, train_cfg,
                       train_opts);
    if (infer->parsed())
      return cmd_infer(cfg, infer_ckpt, infer_dataset, infer_out, infer_clip_len, infer_stride,
                       infer_mode, infer_top_k, infer_opts);
    if (eval->parsed()) return cmd_eval(eval_pred, eval_dataset, eval_json, eval_csv);
    if (sweep->parsed())
      return cmd_sweep(sweep_ckpts, sweep_dataset, sweep_grid, sweep_out, sweep_top_k,
                       sweep_seeds);
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help exits 0, every parse problem is a usage error
  } catch (const novis::contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

#pragma once

// Track-set serialization: a JSON manifest per video (id, extents, tracks
// with class and score) next to one RLE mask volume per track.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "novis/rle.hpp"
#include "novis/tracker.hpp"

namespace novis {

inline void save_trackset(const std::string& dir, const TrackSet& ts) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json j;
  j["video"] = ts.video_id;
  j["frames"] = ts.frames;
  j["height"] = ts.height;
  j["width"] = ts.width;
  auto& tracks = j["tracks"] = nlohmann::json::array();
  for (const auto& t : ts.tracks) {
    const std::string rle_name = std::to_string(t.id) + ".rle";
    save_rle((fs::path(dir) / rle_name).string(), t.masks);
    tracks.push_back(
        {{"id", t.id}, {"class", t.class_id}, {"score", t.score}, {"rle", rle_name}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  check_contract(out.good(), "save_trackset: cannot open manifest in " + dir);
  out << j.dump(2) << "\n";
}

inline TrackSet load_trackset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  check_contract(in.good(), "load_trackset: missing manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw contract_error("load_trackset: malformed manifest " + manifest_path.string() + ": " +
                         e.what());
  }
  TrackSet ts;
  ts.video_id = j.at("video").get<std::string>();
  ts.frames = j.at("frames").get<int>();
  ts.height = j.at("height").get<int>();
  ts.width = j.at("width").get<int>();
  for (const auto& jt : j.at("tracks")) {
    FinalizedTrack t;
    t.id = jt.at("id").get<int>();
    t.class_id = jt.at("class").get<int>();
    t.score = jt.at("score").get<double>();
    t.masks = load_rle((fs::path(dir) / jt.at("rle").get<std::string>()).string(), ts.frames,
                       ts.height, ts.width);
    ts.tracks.push_back(std::move(t));
  }
  return ts;
}

}  // namespace novis

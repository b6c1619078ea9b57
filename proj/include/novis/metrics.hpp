#pragma once

// VIS metrics: greedy volumetric-IoU matching per class and threshold,
// 101-point interpolated average precision over the 0.50:0.05:0.95 grid,
// AP50/AP75, and AR@k. The brute-force oracle re-derives the match set by
// exhaustive enumeration and recomputes the precision-recall integral
// directly; it is test-only and size-capped.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "novis/bitvolume.hpp"
#include "novis/tracker.hpp"

namespace novis {

inline std::vector<double> default_iou_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
  return t;
}

struct EvalReport {
  double ap = 0, ap50 = 0, ap75 = 0, ar1 = 0, ar10 = 0;
  std::map<int, double> per_class_ap;  // class id -> AP over the threshold grid
};

namespace detail {

struct FlatPrediction {
  int video = 0;      // index into the track-set list
  int track_id = 0;
  int class_id = 0;
  double score = 0;
  const BitVolume* masks = nullptr;
};

struct FlatGt {
  int video = 0;
  int track_id = 0;
  int class_id = 0;
  const BitVolume* masks = nullptr;
};

// Deterministic prediction order: score descending, then video, then id.
inline bool pred_before(const FlatPrediction& a, const FlatPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.video != b.video) return a.video < b.video;
  return a.track_id < b.track_id;
}

// Greedy matching of ordered predictions against per-video unmatched ground
// truth of the same class: highest IoU >= threshold wins, ties resolved by
// the lower ground-truth id. Returns the TP flag per prediction (in order)
// and the number of matched ground-truth tracks.
inline std::vector<char> greedy_match(const std::vector<FlatPrediction>& preds,
                                      const std::vector<FlatGt>& gts, double threshold) {
  std::vector<char> tp(preds.size(), 0);
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    int best = -1;
    double best_iou = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].video != preds[p].video) continue;
      const double iou = volumetric_iou(*preds[p].masks, *gts[g].masks);
      if (iou < threshold) continue;
      if (iou > best_iou ||
          (iou == best_iou && best >= 0 &&
           gts[g].track_id < gts[static_cast<std::size_t>(best)].track_id)) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = 1;
      tp[p] = 1;
    }
  }
  return tp;
}

// 101-point interpolated AP from an ordered TP sequence.
inline double interpolated_ap(const std::vector<char>& tp, int total_gt) {
  if (total_gt == 0) return 0;
  std::vector<double> recall, precision;
  int cum_tp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    cum_tp += tp[i] ? 1 : 0;
    recall.push_back(static_cast<double>(cum_tp) / total_gt);
    precision.push_back(static_cast<double>(cum_tp) / static_cast<double>(i + 1));
  }
  double ap = 0;
  for (int r = 0; r <= 100; ++r) {
    const double level = r / 100.0;
    double best = 0;
    for (std::size_t i = 0; i < recall.size(); ++i)
      if (recall[i] >= level) best = std::max(best, precision[i]);
    ap += best;
  }
  return ap / 101.0;
}

}  // namespace detail

// Mean over classes (with >= 1 ground-truth track) of the interpolated AP at
// one IoU threshold. Shared by evaluate_ap and the acceptance comparisons.
inline double ap_at_threshold(const std::vector<TrackSet>& preds,
                              const std::vector<TrackSet>& gts, double threshold) {
  check_contract(preds.size() == gts.size(), "ap_at_threshold: video sets differ");
  std::vector<detail::FlatPrediction> all_preds;
  std::vector<detail::FlatGt> all_gts;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    for (const auto& t : preds[v].tracks)
      all_preds.push_back({static_cast<int>(v), t.id, t.class_id, t.score, &t.masks});
    for (const auto& t : gts[v].tracks)
      all_gts.push_back({static_cast<int>(v), t.id, t.class_id, &t.masks});
  }
  std::sort(all_preds.begin(), all_preds.end(), detail::pred_before);

  std::map<int, int> gt_per_class;
  for (const auto& g : all_gts) gt_per_class[g.class_id] += 1;
  check_contract(!gt_per_class.empty(), "ap_at_threshold: no ground-truth tracks");

  double total = 0;
  for (const auto& [cls, count] : gt_per_class) {
    std::vector<detail::FlatPrediction> cp;
    std::vector<detail::FlatGt> cg;
    for (const auto& p : all_preds)
      if (p.class_id == cls) cp.push_back(p);
    for (const auto& g : all_gts)
      if (g.class_id == cls) cg.push_back(g);
    total += detail::interpolated_ap(detail::greedy_match(cp, cg, threshold), count);
  }
  return total / static_cast<double>(gt_per_class.size());
}

// Recall at one threshold keeping only the k highest-scored predictions per
// video, averaged over classes with ground truth.
inline double ar_at_threshold(const std::vector<TrackSet>& preds,
                              const std::vector<TrackSet>& gts, double threshold, int keep) {
  std::vector<detail::FlatPrediction> kept;
  for (std::size_t v = 0; v < preds.size(); ++v) {
    std::vector<detail::FlatPrediction> vp;
    for (const auto& t : preds[v].tracks)
      vp.push_back({static_cast<int>(v), t.id, t.class_id, t.score, &t.masks});
    std::sort(vp.begin(), vp.end(), detail::pred_before);
    for (std::size_t i = 0; i < vp.size() && i < static_cast<std::size_t>(keep); ++i)
      kept.push_back(vp[i]);
  }
  std::sort(kept.begin(), kept.end(), detail::pred_before);

  std::vector<detail::FlatGt> all_gts;
  for (std::size_t v = 0; v < gts.size(); ++v)
    for (const auto& t : gts[v].tracks)
      all_gts.push_back({static_cast<int>(v), t.id, t.class_id, &t.masks});
  std::map<int, int> gt_per_class;
  for (const auto& g : all_gts) gt_per_class[g.class_id] += 1;

  double total = 0;
  for (const auto& [cls, count] : gt_per_class) {
    std::vector<detail::FlatPrediction> cp;
    std::vector<detail::FlatGt> cg;
    for (const auto& p : kept)
      if (p.class_id == cls) cp.push_back(p);
    for (const auto& g : all_gts)
      if (g.class_id == cls) cg.push_back(g);
    const auto tp = detail::greedy_match(cp, cg, threshold);
    int matched = 0;
    for (char v : tp) matched += v ? 1 : 0;
    total += static_cast<double>(matched) / count;
  }
  return total / static_cast<double>(gt_per_class.size());
}

inline EvalReport evaluate_ap(const std::vector<TrackSet>& preds,
                              const std::vector<TrackSet>& gts,
                              const std::vector<double>& thresholds = default_iou_thresholds()) {
  check_contract(!thresholds.empty(), "evaluate_ap: empty threshold grid");
  EvalReport report;

  std::map<int, int> gt_per_class;
  for (const auto& ts : gts)
    for (const auto& t : ts.tracks) gt_per_class[t.class_id] += 1;
  check_contract(!gt_per_class.empty(), "evaluate_ap: no ground-truth tracks");

  // Per-class AP over the grid (classes without ground truth are excluded).
  std::map<int, double> class_totals;
  for (double th : thresholds) {
    std::vector<detail::FlatPrediction> all_preds;
    std::vector<detail::FlatGt> all_gts;
    for (std::size_t v = 0; v < preds.size(); ++v)
      for (const auto& t : preds[v].tracks)
        all_preds.push_back({static_cast<int>(v), t.id, t.class_id, t.score, &t.masks});
    for (std::size_t v = 0; v < gts.size(); ++v)
      for (const auto& t : gts[v].tracks)
        all_gts.push_back({static_cast<int>(v), t.id, t.class_id, &t.masks});
    std::sort(all_preds.begin(), all_preds.end(), detail::pred_before);
    for (const auto& [cls, count] : gt_per_class) {
      std::vector<detail::FlatPrediction> cp;
      std::vector<detail::FlatGt> cg;
      for (const auto& p : all_preds)
        if (p.class_id == cls) cp.push_back(p);
      for (const auto& g : all_gts)
        if (g.class_id == cls) cg.push_back(g);
      class_totals[cls] += detail::interpolated_ap(detail::greedy_match(cp, cg, th), count);
    }
  }
  for (const auto& [cls, total] : class_totals) {
    report.per_class_ap[cls] = total / static_cast<double>(thresholds.size());
    report.ap += report.per_class_ap[cls];
  }
  report.ap /= static_cast<double>(class_totals.size());
  report.ap50 = ap_at_threshold(preds, gts, 0.5);
  report.ap75 = ap_at_threshold(preds, gts, 0.75);

  double ar1 = 0, ar10 = 0;
  for (double th : thresholds) {
    ar1 += ar_at_threshold(preds, gts, th, 1);
    ar10 += ar_at_threshold(preds, gts, th, 10);
  }
  report.ar1 = ar1 / static_cast<double>(thresholds.size());
  report.ar10 = ar10 / static_cast<double>(thresholds.size());
  return report;
}

// Test-only exhaustive oracle (<= 4 predictions, <= 3 ground-truth tracks):
// enumerates all injective candidate matchings whose pairs clear the
// threshold, keeps the one consistent with greedy-by-score processing, and
// integrates the precision-recall curve directly.
inline double ap_bruteforce_oracle(const std::vector<TrackSet>& preds,
                                   const std::vector<TrackSet>& gts, double threshold) {
  std::vector<detail::FlatPrediction> all_preds;
  std::vector<detail::FlatGt> all_gts;
  for (std::size_t v = 0; v < preds.size(); ++v)
    for (const auto& t : preds[v].tracks)
      all_preds.push_back({static_cast<int>(v), t.id, t.class_id, t.score, &t.masks});
  for (std::size_t v = 0; v < gts.size(); ++v)
    for (const auto& t : gts[v].tracks)
      all_gts.push_back({static_cast<int>(v), t.id, t.class_id, &t.masks});
  check_contract(all_preds.size() <= 4 && all_gts.size() <= 3,
                 "ap_bruteforce_oracle: instance too large");
  std::sort(all_preds.begin(), all_preds.end(), detail::pred_before);

  std::map<int, int> gt_per_class;
  for (const auto& g : all_gts) gt_per_class[g.class_id] += 1;
  check_contract(!gt_per_class.empty(), "ap_bruteforce_oracle: no ground truth");

  double total_ap = 0;
  for (const auto& [cls, gt_count] : gt_per_class) {
    std::vector<detail::FlatPrediction> cp;
    std::vector<detail::FlatGt> cg;
    for (const auto& p : all_preds)
      if (p.class_id == cls) cp.push_back(p);
    for (const auto& g : all_gts)
      if (g.class_id == cls) cg.push_back(g);

    const int np = static_cast<int>(cp.size()), ng = static_cast<int>(cg.size());
    std::vector<std::vector<double>> iou(static_cast<std::size_t>(np),
                                         std::vector<double>(static_cast<std::size_t>(ng)));
    for (int p = 0; p < np; ++p)
      for (int g = 0; g < ng; ++g) {
        iou[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)] =
            cp[static_cast<std::size_t>(p)].video == cg[static_cast<std::size_t>(g)].video
                ? volumetric_iou(*cp[static_cast<std::size_t>(p)].masks,
                                 *cg[static_cast<std::size_t>(g)].masks)
                : 0.0;
      }

    // Enumerate all candidate injective matchings over pairs clearing the
    // threshold (-1 = unmatched), then keep those consistent with the greedy
    // rule: an in-order prediction must take the best available ground truth
    // whenever one clears the threshold.
    std::vector<int> candidate(static_cast<std::size_t>(np), -1);
    std::vector<char> used(static_cast<std::size_t>(ng), 0);
    std::vector<std::vector<int>> consistent;
    auto enumerate = [&](auto&& self, int p) -> void {
      if (p == np) {
        std::vector<char> available(static_cast<std::size_t>(ng), 1);
        for (int q = 0; q < np; ++q) {
          int best = -1;
          double best_iou = 0;
          for (int g = 0; g < ng; ++g) {
            if (!available[static_cast<std::size_t>(g)]) continue;
            const double value = iou[static_cast<std::size_t>(q)][static_cast<std::size_t>(g)];
            if (value < threshold) continue;
            if (value > best_iou ||
                (value == best_iou && best >= 0 &&
                 cg[static_cast<std::size_t>(g)].track_id <
                     cg[static_cast<std::size_t>(best)].track_id)) {
              best_iou = value;
              best = g;
            }
          }
          if (candidate[static_cast<std::size_t>(q)] != best) return;  // not greedy
          if (best >= 0) available[static_cast<std::size_t>(best)] = 0;
        }
        consistent.push_back(candidate);
        return;
      }
      self(self, p + 1);  // leave p unmatched
      for (int g = 0; g < ng; ++g) {
        if (used[static_cast<std::size_t>(g)]) continue;
        if (iou[static_cast<std::size_t>(p)][static_cast<std::size_t>(g)] < threshold) continue;
        used[static_cast<std::size_t>(g)] = 1;
        candidate[static_cast<std::size_t>(p)] = g;
        self(self, p + 1);
        candidate[static_cast<std::size_t>(p)] = -1;
        used[static_cast<std::size_t>(g)] = 0;
      }
    };
    enumerate(enumerate, 0);
    check_contract(consistent.size() == 1, "ap_bruteforce_oracle: greedy match not unique");

    // Direct PR integral over the 101 recall levels.
    const auto& match = consistent.front();
    double ap = 0;
    for (int r = 0; r <= 100; ++r) {
      const double level = r / 100.0;
      double best_precision = 0;
      int tp = 0;
      for (int q = 0; q < np; ++q) {
        if (match[static_cast<std::size_t>(q)] >= 0) ++tp;
        const double recall = gt_count > 0 ? static_cast<double>(tp) / gt_count : 0;
        const double precision = static_cast<double>(tp) / (q + 1);
        if (recall >= level) best_precision = std::max(best_precision, precision);
      }
      ap += best_precision;
    }
    total_ap += ap / 101.0;
  }
  return total_ap / static_cast<double>(gt_per_class.size());
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["AP"] = r.ap;
  j["AP50"] = r.ap50;
  j["AP75"] = r.ap75;
  j["AR1"] = r.ar1;
  j["AR10"] = r.ar10;
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [cls, ap] : r.per_class_ap) per_class[std::to_string(cls)] = ap;
  j["per_class_AP"] = per_class;
  return j;
}

inline std::string report_csv_fields() { return "AP,AP50,AP75,AR1,AR10"; }

inline std::string report_csv_row(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f", r.ap, r.ap50, r.ap75, r.ar1,
                r.ar10);
  return buf;
}

}  // namespace novis

#pragma once

// Clip training objective: per-layer Hungarian assignment of queries to
// ground-truth objects, weighted class cross-entropy, per-frame binary mask
// loss, and a volumetric dice loss over the whole clip volume.

#include <cmath>
#include <vector>

#include "novis/clip.hpp"
#include "novis/hungarian.hpp"
#include "novis/model.hpp"
#include "novis/tensor.hpp"

namespace novis {

struct LossWeights {
  double cls = 2.0;
  double mask = 5.0;
  double dice = 5.0;
  double background = 0.1;  // class-weight of the background class
};

constexpr double kDiceEps = 1.0;

// Injective map ground-truth object -> query index. Queries not in the image
// are implicitly matched to background.
struct Assignment {
  std::vector<int> query_for_object;
};

// Ground truth reduced to the mask-logit grid by area-majority vote
// (strictly more than half of the covered pixels must be foreground).
template <typename S>
struct PreparedGroundTruthT {
  int t = 0, mh = 0, mw = 0;
  std::vector<int> classes;
  std::vector<std::vector<S>> masks;  // per object, [t*mh*mw] of {0,1}
  std::vector<double> mask_sums;
};

template <typename S>
PreparedGroundTruthT<S> prepare_ground_truth(const ClipGroundTruth& gt, int mh, int mw) {
  check_contract(gt.height % mh == 0 && gt.width % mw == 0,
                 "prepare_ground_truth: logit grid must divide the frame grid");
  const int fy = gt.height / mh, fx = gt.width / mw;
  const int cell = fy * fx;
  PreparedGroundTruthT<S> out;
  out.t = gt.frames;
  out.mh = mh;
  out.mw = mw;
  for (const auto& obj : gt.objects) {
    std::vector<S> plane(static_cast<std::size_t>(gt.frames) * mh * mw, S(0));
    double total = 0;
    for (int t = 0; t < gt.frames; ++t)
      for (int y = 0; y < mh; ++y)
        for (int x = 0; x < mw; ++x) {
          int count = 0;
          for (int dy = 0; dy < fy; ++dy)
            for (int dx = 0; dx < fx; ++dx)
              count += obj.masks.get(t, y * fy + dy, x * fx + dx) ? 1 : 0;
          if (2 * count > cell) {
            plane[static_cast<std::size_t>((t * mh + y) * mw + x)] = S(1);
            total += 1;
          }
        }
    out.classes.push_back(obj.class_id);
    out.masks.push_back(std::move(plane));
    out.mask_sums.push_back(total);
  }
  return out;
}

namespace detail {

inline double bce_from_logit(double z, double y) {
  const double abs_z = z >= 0 ? z : -z;
  return (z >= 0 ? z : 0.0) - z * y + std::log1p(std::exp(-abs_z));
}

}  // namespace detail

// cost(q, o) = cls * (-softmax prob of o's class)
//            + mask * (mean binary CE over the downsampled volume)
//            + dice * (volumetric dice loss). Plain double arithmetic on the
// raw logits; the matching is a constant for the gradient.
template <typename S>
std::vector<double> assignment_cost_matrix(const TensorT<S>& class_logits,
                                           const TensorT<S>& mask_logits,
                                           const PreparedGroundTruthT<S>& gt,
                                           const LossWeights& w) {
  const int n = class_logits.dim(0);
  const int k = class_logits.dim(1) - 1;
  const int n_obj = static_cast<int>(gt.classes.size());
  const long long vol = mask_logits.size() / n;

  std::vector<double> probs(static_cast<std::size_t>(n) * (k + 1));
  for (int q = 0; q < n; ++q) {
    const S* lv = class_logits.data() + static_cast<long long>(q) * (k + 1);
    double mx = lv[0];
    for (int j = 1; j <= k; ++j) mx = std::max(mx, static_cast<double>(lv[j]));
    double denom = 0;
    for (int j = 0; j <= k; ++j) {
      probs[static_cast<std::size_t>(q * (k + 1) + j)] = std::exp(lv[j] - mx);
      denom += probs[static_cast<std::size_t>(q * (k + 1) + j)];
    }
    for (int j = 0; j <= k; ++j) probs[static_cast<std::size_t>(q * (k + 1) + j)] /= denom;
  }

  std::vector<double> cost(static_cast<std::size_t>(n_obj) * n);
  for (int q = 0; q < n; ++q) {
    const S* mz = mask_logits.data() + static_cast<long long>(q) * vol;
    double sum_p = 0;
    for (long long i = 0; i < vol; ++i) {
      const double z = mz[i];
      sum_p += z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    for (int o = 0; o < n_obj; ++o) {
      const auto& g = gt.masks[static_cast<std::size_t>(o)];
      double bce = 0, inter = 0;
      for (long long i = 0; i < vol; ++i) {
        const double z = mz[i];
        const double gv = g[static_cast<std::size_t>(i)];
        bce += detail::bce_from_logit(z, gv);
        if (gv != 0) {
          inter += z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        }
      }
      const double dice =
          1.0 - 2.0 * inter / (sum_p + gt.mask_sums[static_cast<std::size_t>(o)] + kDiceEps);
      const double cls = -probs[static_cast<std::size_t>(
          q * (k + 1) + gt.classes[static_cast<std::size_t>(o)])];
      cost[static_cast<std::size_t>(o) * n + q] =
          w.cls * cls + w.mask * (bce / static_cast<double>(vol)) + w.dice * dice;
    }
  }
  return cost;
}

template <typename S>
Assignment hungarian_match(const TensorT<S>& class_logits, const TensorT<S>& mask_logits,
                           const PreparedGroundTruthT<S>& gt, const LossWeights& w) {
  const int n = class_logits.dim(0);
  const int n_obj = static_cast<int>(gt.classes.size());
  check_contract(n_obj <= n, "hungarian_match: more objects than queries");
  Assignment a;
  if (n_obj == 0) return a;
  auto cost = assignment_cost_matrix(class_logits, mask_logits, gt, w);
  a.query_for_object = solve_assignment_min(cost, n_obj, n);
  return a;
}

// Weighted cross-entropy over all queries; unassigned queries target the
// background class, whose weight is down-weighted.
template <typename S>
TensorT<S> class_loss(const TensorT<S>& class_logits, const Assignment& assign,
                      const PreparedGroundTruthT<S>& gt, const LossWeights& w) {
  const int n = class_logits.dim(0);
  const int k = class_logits.dim(1) - 1;
  std::vector<int> targets(static_cast<std::size_t>(n), k);
  for (std::size_t o = 0; o < assign.query_for_object.size(); ++o)
    targets[static_cast<std::size_t>(assign.query_for_object[o])] =
        gt.classes[o];
  std::vector<S> weights(static_cast<std::size_t>(k) + 1, S(1));
  weights[static_cast<std::size_t>(k)] = static_cast<S>(w.background);
  return softmax_cross_entropy(class_logits, targets, weights);
}

// Mean over assigned queries of the mean per-frame, per-pixel binary CE.
// Fully occluded ground-truth frames supervise the prediction to empty.
template <typename S>
TensorT<S> frame_mask_loss(const TensorT<S>& mask_logits, const Assignment& assign,
                           const PreparedGroundTruthT<S>& gt) {
  const int n_obj = static_cast<int>(assign.query_for_object.size());
  if (n_obj == 0) return TensorT<S>::scalar(S(0));
  const int n = mask_logits.dim(0);
  const long long vol = mask_logits.size() / n;
  auto flat = reshape(mask_logits, {n, static_cast<int>(vol)});
  auto sel = gather_rows(flat, assign.query_for_object);
  TensorT<S> targets({n_obj, static_cast<int>(vol)});
  for (int o = 0; o < n_obj; ++o)
    std::copy(gt.masks[static_cast<std::size_t>(o)].begin(),
              gt.masks[static_cast<std::size_t>(o)].end(),
              targets.data() + static_cast<long long>(o) * vol);
  return mean(bce_with_logits(sel, targets));
}

// Per assigned query: 1 - 2*sum(p.g) / (sum(p) + sum(g) + eps) over the whole
// clip volume; averaged over assigned queries.
template <typename S>
TensorT<S> volumetric_dice_loss(const TensorT<S>& mask_logits, const Assignment& assign,
                                const PreparedGroundTruthT<S>& gt) {
  const int n_obj = static_cast<int>(assign.query_for_object.size());
  if (n_obj == 0) return TensorT<S>::scalar(S(0));
  const int n = mask_logits.dim(0);
  const long long vol = mask_logits.size() / n;
  auto flat = reshape(mask_logits, {n, static_cast<int>(vol)});
  TensorT<S> total = TensorT<S>::scalar(S(0));
  for (int o = 0; o < n_obj; ++o) {
    auto row = gather_rows(flat, {assign.query_for_object[static_cast<std::size_t>(o)]});
    auto p = sigmoid(row);
    TensorT<S> g({1, static_cast<int>(vol)}, gt.masks[static_cast<std::size_t>(o)]);
    auto inter = sum(mul(p, g));
    auto denom = add_scalar(sum(p),
                            static_cast<S>(gt.mask_sums[static_cast<std::size_t>(o)] + kDiceEps));
    auto dice = div(scale(inter, S(2)), denom);
    total = add(total, add_scalar(scale(dice, S(-1)), S(1)));
  }
  return scale(total, S(1) / static_cast<S>(n_obj));
}

struct LossBreakdown {
  double total = 0, cls = 0, mask = 0, dice = 0;
};

template <typename S>
struct ClipLossT {
  TensorT<S> total;  // taped scalar
  LossBreakdown breakdown;
};

// Deep supervision: one Hungarian match and one weighted loss per decoder
// layer, summed over layers 1..L.
template <typename S>
ClipLossT<S> clip_loss(const DecodeResultT<S>& pred, const ClipGroundTruth& gt,
                       const LossWeights& w = LossWeights{}) {
  check_contract(!pred.aux.empty(), "clip_loss: per-layer predictions required");
  const int mh = pred.mask_logits.dim(2), mw = pred.mask_logits.dim(3);
  auto prepared = prepare_ground_truth<S>(gt, mh, mw);

  ClipLossT<S> out;
  out.total = TensorT<S>::scalar(S(0));
  for (const auto& layer : pred.aux) {
    auto assign = hungarian_match(layer.class_logits, layer.mask_logits, prepared, w);
    auto lc = class_loss(layer.class_logits, assign, prepared, w);
    auto lm = frame_mask_loss(layer.mask_logits, assign, prepared);
    auto ld = volumetric_dice_loss(layer.mask_logits, assign, prepared);
    out.breakdown.cls += static_cast<double>(lc.item()) * w.cls;
    out.breakdown.mask += static_cast<double>(lm.item()) * w.mask;
    out.breakdown.dice += static_cast<double>(ld.item()) * w.dice;
    out.total = add(out.total, add(scale(lc, static_cast<S>(w.cls)),
                                   add(scale(lm, static_cast<S>(w.mask)),
                                       scale(ld, static_cast<S>(w.dice)))));
  }
  out.breakdown.total = static_cast<double>(out.total.item());
  return out;
}

}  // namespace novis

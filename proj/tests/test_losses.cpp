#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "novis/gradcheck.hpp"
#include "novis/hungarian.hpp"
#include "novis/losses.hpp"
#include "novis/model.hpp"
#include "novis/rng.hpp"

using namespace novis;

namespace {

// Exhaustive minimum over all injections of rows into columns.
double brute_force_best(const std::vector<double>& cost, int rows, int cols,
                        std::vector<int>* best_assignment = nullptr) {
  std::vector<int> current(static_cast<std::size_t>(rows), -1);
  std::vector<char> used(static_cast<std::size_t>(cols), 0);
  std::vector<int> best(static_cast<std::size_t>(rows), -1);
  double best_total = std::numeric_limits<double>::infinity();
  auto recurse = [&](auto&& self, int row, double acc) -> void {
    if (row == rows) {
      if (acc < best_total) {
        best_total = acc;
        best = current;
      }
      return;
    }
    for (int c = 0; c < cols; ++c) {
      if (used[static_cast<std::size_t>(c)]) continue;
      used[static_cast<std::size_t>(c)] = 1;
      current[static_cast<std::size_t>(row)] = c;
      self(self, row + 1, acc + cost[static_cast<std::size_t>(row) * cols + c]);
      used[static_cast<std::size_t>(c)] = 0;
    }
  };
  recurse(recurse, 0, 0.0);
  if (best_assignment) *best_assignment = best;
  return best_total;
}

ClipGroundTruth block_gt(int frames, int h, int w, std::vector<std::array<int, 5>> blocks) {
  // each block: {class, y0, x0, y1, x1} drawn on every frame
  ClipGroundTruth gt;
  gt.frames = frames;
  gt.height = h;
  gt.width = w;
  int id = 0;
  for (const auto& b : blocks) {
    ClipObject obj;
    obj.class_id = b[0];
    obj.identity = id++;
    obj.masks = BitVolume(frames, h, w);
    for (int t = 0; t < frames; ++t)
      for (int y = b[1]; y < b[3]; ++y)
        for (int x = b[2]; x < b[4]; ++x) obj.masks.set(t, y, x, true);
    gt.objects.push_back(std::move(obj));
  }
  return gt;
}

}  // namespace

TEST_CASE("assignment solver: stated examples") {
  // cost [[0,1],[1,0]] -> identity, total 0
  auto r = solve_assignment_min({0, 1, 1, 0}, 2, 2);
  CHECK(r[0] == 0);
  CHECK(r[1] == 1);
}

TEST_CASE("assignment solver equals brute force on random rectangles") {
  Rng rng(101);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = rng.uniform_int(1, 6);
    const int cols = rng.uniform_int(rows, 12);
    std::vector<double> cost(static_cast<std::size_t>(rows) * cols);
    for (auto& c : cost) c = rng.uniform(-2, 2);
    auto got = solve_assignment_min(cost, rows, cols);
    double got_total = 0;
    std::vector<char> used(static_cast<std::size_t>(cols), 0);
    for (int i = 0; i < rows; ++i) {
      REQUIRE(got[static_cast<std::size_t>(i)] >= 0);
      CHECK(!used[static_cast<std::size_t>(got[static_cast<std::size_t>(i)])]);
      used[static_cast<std::size_t>(got[static_cast<std::size_t>(i)])] = 1;
      got_total += cost[static_cast<std::size_t>(i) * cols + got[static_cast<std::size_t>(i)]];
    }
    const double best = brute_force_best(cost, rows, cols);
    CHECK(got_total == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("hungarian_match assigns the near-perfect query") {
  PreparedGroundTruthT<float> gt;
  gt.t = 1;
  gt.mh = 2;
  gt.mw = 2;
  gt.classes = {1};
  gt.masks = {{1.f, 1.f, 0.f, 0.f}};
  gt.mask_sums = {2.0};

  TensorT<float> class_logits({4, 4});
  TensorT<float> mask_logits({4, 1, 2, 2}, std::vector<float>(16, -8.f));
  // query 2 predicts class 1 and the right mask with confidence
  class_logits.data()[2 * 4 + 1] = 9.f;
  mask_logits.data()[2 * 4 + 0] = 9.f;
  mask_logits.data()[2 * 4 + 1] = 9.f;

  auto a = hungarian_match(class_logits, mask_logits, gt, LossWeights{});
  REQUIRE(a.query_for_object.size() == 1);
  CHECK(a.query_for_object[0] == 2);

  PreparedGroundTruthT<float> too_many = gt;
  for (int i = 0; i < 4; ++i) {
    too_many.classes.push_back(0);
    too_many.masks.push_back(gt.masks[0]);
    too_many.mask_sums.push_back(2.0);
  }
  CHECK_THROWS_AS(hungarian_match(class_logits, mask_logits, too_many, LossWeights{}),
                  contract_error);
}

TEST_CASE("hungarian_match is optimal for its own cost matrix") {
  Rng rng(103);
  LossWeights w;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(2, 8);
    const int n_obj = rng.uniform_int(1, std::min(4, n));
    PreparedGroundTruthT<float> gt;
    gt.t = 1;
    gt.mh = 2;
    gt.mw = 2;
    for (int o = 0; o < n_obj; ++o) {
      gt.classes.push_back(rng.uniform_int(0, 2));
      std::vector<float> m(4);
      double s = 0;
      for (auto& v : m) {
        v = rng.bernoulli(0.5) ? 1.f : 0.f;
        s += v;
      }
      gt.masks.push_back(m);
      gt.mask_sums.push_back(s);
    }
    TensorT<float> cl({n, 4}), ml({n, 1, 2, 2});
    for (long long i = 0; i < cl.size(); ++i) cl.data()[i] = rng.uniform(-2, 2);
    for (long long i = 0; i < ml.size(); ++i) ml.data()[i] = rng.uniform(-3, 3);

    auto a = hungarian_match(cl, ml, gt, w);
    auto cost = assignment_cost_matrix(cl, ml, gt, w);
    double total = 0;
    for (int o = 0; o < n_obj; ++o)
      total += cost[static_cast<std::size_t>(o) * n + a.query_for_object[static_cast<std::size_t>(o)]];
    CHECK(total == doctest::Approx(brute_force_best(cost, n_obj, n)).epsilon(1e-10));
  }
}

TEST_CASE("class_loss closed forms") {
  PreparedGroundTruthT<float> gt;
  gt.classes = {1};
  gt.masks = {{}};
  gt.mask_sums = {0};
  Assignment assign;
  assign.query_for_object = {0};

  // uniform logits, K=3 -> ln 4 per query, and the weighted mean stays ln 4
  TensorT<float> uniform({5, 4});
  auto l = class_loss(uniform, assign, gt, LossWeights{});
  CHECK(l.item() == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  // confident correct predictions -> loss ~ 0
  TensorT<float> confident({5, 4}, std::vector<float>(20, 0.f));
  confident.data()[0 * 4 + 1] = 40.f;  // assigned query hits its class
  for (int q = 1; q < 5; ++q) confident.data()[q * 4 + 3] = 40.f;  // background
  CHECK(class_loss(confident, assign, gt, LossWeights{}).item() ==
        doctest::Approx(0.0).epsilon(1e-6));

  // no objects, all confidently background -> ~0
  Assignment empty;
  PreparedGroundTruthT<float> no_gt;
  TensorT<float> bg({5, 4}, std::vector<float>(20, 0.f));
  for (int q = 0; q < 5; ++q) bg.data()[q * 4 + 3] = 40.f;
  CHECK(class_loss(bg, empty, no_gt, LossWeights{}).item() == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("frame_mask_loss closed forms") {
  PreparedGroundTruthT<float> gt;
  gt.t = 2;
  gt.mh = 2;
  gt.mw = 2;
  gt.classes = {0};
  gt.masks = {{1.f, 0.f, 1.f, 0.f, /*frame 1 fully occluded:*/ 0.f, 0.f, 0.f, 0.f}};
  gt.mask_sums = {2.0};
  Assignment assign;
  assign.query_for_object = {1};

  // zero logits -> per-pixel ln 2
  TensorT<float> zeros({3, 2, 2, 2});
  CHECK(frame_mask_loss(zeros, assign, gt).item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));

  // perfect large-margin logits -> ~0, occluded frame included and supervised to empty
  TensorT<float> perfect({3, 2, 2, 2}, std::vector<float>(24, 0.f));
  float vals[8] = {40.f, -40.f, 40.f, -40.f, -40.f, -40.f, -40.f, -40.f};
  for (int i = 0; i < 8; ++i) perfect.data()[1 * 8 + i] = vals[i];
  CHECK(frame_mask_loss(perfect, assign, gt).item() == doctest::Approx(0.0).epsilon(1e-6));

  // no assigned queries -> 0
  Assignment none;
  PreparedGroundTruthT<float> no_gt;
  CHECK(frame_mask_loss(zeros, none, no_gt).item() == 0.0f);
}

TEST_CASE("volumetric_dice_loss closed forms") {
  Assignment assign;
  assign.query_for_object = {0};

  // 2-voxel case: p = [1,1], g = [1,0] -> 1 - 2/(2+1+eps) = 0.5 at eps = 1
  PreparedGroundTruthT<float> gt2;
  gt2.classes = {0};
  gt2.masks = {{1.f, 0.f}};
  gt2.mask_sums = {1.0};
  TensorT<float> ones({1, 1, 1, 2}, {40.f, 40.f});
  CHECK(volumetric_dice_loss(ones, assign, gt2).item() == doctest::Approx(0.5).epsilon(1e-5));

  // p == g binary -> eps-limited: 1 - 2n/(2n+1) with n = 2
  TensorT<float> match({1, 1, 1, 2}, {40.f, 40.f});
  PreparedGroundTruthT<float> gt_eq;
  gt_eq.classes = {0};
  gt_eq.masks = {{1.f, 1.f}};
  gt_eq.mask_sums = {2.0};
  CHECK(volumetric_dice_loss(match, assign, gt_eq).item() ==
        doctest::Approx(1.0 - 4.0 / 5.0).epsilon(1e-5));

  // p = 0 everywhere, g nonempty -> 1
  TensorT<float> off({1, 1, 1, 2}, {-40.f, -40.f});
  CHECK(volumetric_dice_loss(off, assign, gt2).item() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("clip_loss at the zero-initialized model equals the composed closed forms") {
  ModelConfig cfg;
  cfg.scales = 3;
  cfg.layers = 4;
  cfg.queries = 8;
  cfg.hidden = 32;
  cfg.classes = 3;
  cfg.heads = 4;
  cfg.seed = 40;
  VideoModel model(cfg);
  Rng rng(41);
  TensorT<float> frames({2, 3, 32, 32});
  for (long long i = 0; i < frames.size(); ++i) frames.data()[i] = rng.uniform(0, 1);
  auto gt = block_gt(2, 32, 32, {{1, 4, 4, 20, 20}});

  auto out = model.forward(frames);
  auto loss = clip_loss(out, gt);

  // heads are zero-initialized: class logits are uniform, mask logits zero
  auto prepared = prepare_ground_truth<float>(gt, 8, 8);
  const double vol = 2 * 8 * 8;
  const double gsum = prepared.mask_sums[0];
  const double dice0 = 1.0 - 2.0 * (0.5 * gsum) / (0.5 * vol + gsum + 1.0);
  const double per_layer = 2.0 * std::log(4.0) + 5.0 * std::log(2.0) + 5.0 * dice0;
  CHECK(loss.total.item() == doctest::Approx(cfg.layers * per_layer).epsilon(1e-4));
  CHECK(loss.breakdown.cls == doctest::Approx(cfg.layers * 2.0 * std::log(4.0)).epsilon(1e-4));
  CHECK(loss.breakdown.mask == doctest::Approx(cfg.layers * 5.0 * std::log(2.0)).epsilon(1e-4));

  // empty ground truth reduces to the background class term only
  ClipGroundTruth empty;
  empty.frames = 2;
  empty.height = 32;
  empty.width = 32;
  auto empty_loss = clip_loss(out, empty);
  CHECK(empty_loss.total.item() ==
        doctest::Approx(cfg.layers * 2.0 * std::log(4.0)).epsilon(1e-4));
  CHECK(empty_loss.breakdown.mask == 0.0);
  CHECK(empty_loss.breakdown.dice == 0.0);

  // doubling the dice weight doubles the dice contribution
  LossWeights heavier;
  heavier.dice *= 2;
  auto heavy = clip_loss(out, gt, heavier);
  CHECK(heavy.breakdown.dice == doctest::Approx(2.0 * loss.breakdown.dice).epsilon(1e-6));
}

TEST_CASE("clip_loss is invariant to ground-truth object order") {
  ModelConfig cfg;
  cfg.scales = 3;
  cfg.layers = 2;
  cfg.queries = 8;
  cfg.hidden = 32;
  cfg.classes = 3;
  cfg.heads = 4;
  cfg.seed = 50;
  VideoModelT<double> model(cfg);
  // break the zero-head symmetry so the match is informative
  Rng rng(51);
  for (auto* name : {"head.cls.w", "head.mask2.w"}) {
    auto& t = model.param(name);
    for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.3, 0.3);
  }
  TensorT<double> frames({2, 3, 32, 32});
  for (long long i = 0; i < frames.size(); ++i) frames.data()[i] = rng.uniform(0, 1);
  auto gt = block_gt(2, 32, 32, {{0, 2, 2, 12, 12}, {1, 14, 14, 30, 30}, {2, 2, 18, 10, 30}});
  auto out = model.forward(frames);
  const double base = clip_loss(out, gt).total.item();

  std::swap(gt.objects[0], gt.objects[2]);
  CHECK(clip_loss(out, gt).total.item() == doctest::Approx(base).epsilon(1e-12));
  std::swap(gt.objects[0], gt.objects[1]);
  CHECK(clip_loss(out, gt).total.item() == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("clip_loss gradients pass finite differences") {
  ModelConfig cfg;
  cfg.scales = 3;
  cfg.layers = 2;
  cfg.queries = 6;
  cfg.hidden = 32;
  cfg.classes = 3;
  cfg.heads = 4;
  cfg.seed = 60;
  VideoModelT<double> model(cfg);
  Rng rng(61);
  for (auto* name : {"head.cls.w", "head.mask2.w"}) {
    auto& t = model.param(name);
    for (long long i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-0.3, 0.3);
  }
  TensorT<double> frames({2, 3, 32, 32});
  for (long long i = 0; i < frames.size(); ++i) frames.data()[i] = rng.uniform(0, 1);
  auto gt = block_gt(2, 32, 32, {{0, 4, 4, 16, 16}, {2, 18, 18, 30, 30}});

  auto f = [&] {
    auto out = model.forward(frames);
    return clip_loss(out, gt).total;
  };
  int checked = 0;
  for (auto* name : {"head.cls.w", "head.mask2.w", "query.content", "temporal.table",
                     "decoder.layer1.ffn1.w", "backbone.out2.b"}) {
    auto& t = model.param(name);
    auto report = finite_difference_check<double>(f, t, 1e-4, 1e-3, /*check_elements=*/6,
                                                  /*seed=*/90 + checked);
    INFO(name, ": ", report.detail);
    CHECK(report.pass);
    ++checked;
  }
  CHECK(checked >= 5);
}

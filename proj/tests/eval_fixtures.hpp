#pragma once

// Detection fixtures and an independent brute-force AP reference.

#include <algorithm>
#include <map>
#include <random>
#include <vector>

#include "test_support.hpp"
#include "turbsim/coco_eval.hpp"

namespace testing_support {

/// Two ground-truth boxes, three detections: a hit, a duplicate on the same
/// object (false positive) and a hit on the second object.
inline turbsim::DatasetManifest hand_truth() {
  turbsim::DatasetManifest m;
  m.images = {{1, "a.png", 64, 64}};
  m.categories = {{1, "car", ""}};
  m.annotations = {{1, 1, 1, {0, 0, 10, 10}, 100, 0}, {2, 1, 1, {20, 20, 10, 10}, 100, 0}};
  return m;
}

inline std::vector<turbsim::Detection> hand_detections() {
  return {{1, 1, {0, 0, 10, 10}, 0.9}, {1, 1, {1, 0, 10, 10}, 0.8}, {1, 1, {21, 20, 10, 10}, 0.7}};
}

struct EvalFixture {
  turbsim::DatasetManifest truth;
  std::vector<turbsim::Detection> dets;
};

/// Boxes on a coarse integer grid so IoUs hit thresholds and ties occur.
inline EvalFixture random_eval_fixture(std::mt19937_64& rng, int images, int categories, int max_gt, int max_det,
                                       bool quantized_scores = true) {
  EvalFixture f;
  for (int c = 0; c < categories; ++c) f.truth.categories.push_back({c + 1, "c" + std::to_string(c + 1), ""});
  std::int64_t ann = 1;
  auto rand_box = [&](double scale) {
    const double w = 1 + static_cast<double>(rng() % 12) * scale, h = 1 + static_cast<double>(rng() % 12) * scale;
    return turbsim::BBox{static_cast<double>(rng() % 12) * scale, static_cast<double>(rng() % 12) * scale, w, h};
  };
  for (int i = 0; i < images; ++i) {
    f.truth.images.push_back({i + 1, "f.png", 200, 200});
    const int ng = static_cast<int>(rng() % (max_gt + 1));
    std::vector<turbsim::BBox> gts;
    for (int g = 0; g < ng; ++g) {
      const double scale = 1 + static_cast<double>(rng() % 10);
      turbsim::BBoxAnnotation a{ann++, i + 1, 1 + static_cast<std::int64_t>(rng() % categories), rand_box(scale), 0, 0};
      a.area = a.bbox[2] * a.bbox[3];
      f.truth.annotations.push_back(a);
      gts.push_back(a.bbox);
    }
    const int nd = static_cast<int>(rng() % (max_det + 1));
    for (int d = 0; d < nd; ++d) {
      turbsim::Detection det;
      det.image_id = i + 1;
      det.category_id = 1 + static_cast<std::int64_t>(rng() % categories);
      if (!gts.empty() && rng() % 3 != 0) {
        // Jittered copy of a ground-truth box.
        det.bbox = gts[rng() % gts.size()];
        det.bbox[0] += static_cast<double>(rng() % 5) - 2;
        det.bbox[1] += static_cast<double>(rng() % 5) - 2;
        det.bbox[2] = std::max(1.0, det.bbox[2] + static_cast<double>(rng() % 5) - 2);
      } else {
        det.bbox = rand_box(1 + static_cast<double>(rng() % 10));
      }
      det.score = quantized_scores ? static_cast<double>(rng() % 5) / 4.0 : uniform01(rng);
      f.dets.push_back(det);
    }
  }
  return f;
}

inline double box_iou(const turbsim::BBox& a, const turbsim::BBox& b) {
  const double ix = std::max(0.0, std::min(a[0] + a[2], b[0] + b[2]) - std::max(a[0], b[0]));
  const double iy = std::max(0.0, std::min(a[1] + a[3], b[1] + b[3]) - std::max(a[1], b[1]));
  return ix * iy / (a[2] * a[3] + b[2] * b[3] - ix * iy);
}

/// Brute-force AP for one category at one IoU threshold, all areas, no crowd
/// boxes: walk the detections by descending score, give each the unmatched
/// ground truth with the largest IoU >= t (later one on equal IoU), then take
/// the precision envelope max{p_i : r_i >= r} on the 101-point recall grid.
inline double reference_ap(const EvalFixture& f, std::int64_t category, double t) {
  std::vector<turbsim::Detection> dets;
  for (const auto& d : f.dets)
    if (d.category_id == category) dets.push_back(d);
  std::sort(dets.begin(), dets.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.image_id != b.image_id) return a.image_id < b.image_id;
    return a.bbox < b.bbox;
  });
  std::vector<const turbsim::BBoxAnnotation*> gts;
  for (const auto& a : f.truth.annotations)
    if (a.category_id == category) gts.push_back(&a);
  if (gts.empty()) return -1.0;
  // max_dets per image
  std::map<std::int64_t, int> per_image;
  std::vector<char> taken(gts.size(), 0);
  std::vector<std::pair<double, double>> pr;  // (recall, precision)
  int tp = 0, seen = 0;
  for (const auto& d : dets) {
    if (++per_image[d.image_id] > 100) continue;
    long best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g]->image_id != d.image_id) continue;
      const double v = box_iou(d.bbox, gts[g]->bbox);
      if (v >= std::min(t, 1 - 1e-10) && v >= best_iou) best = static_cast<long>(g), best_iou = v;
    }
    ++seen;
    if (best >= 0) taken[best] = 1, ++tp;
    pr.emplace_back(double(tp) / gts.size(), double(tp) / seen);
  }
  double sum = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i == 100 ? 1.0 : i * (1.0 / 100);  // numpy.linspace(0, 1, 101)
    double best = 0;
    for (const auto& [rc, pc] : pr)
      if (rc >= r) best = std::max(best, pc);
    sum += best;
  }
  return sum / 101.0;
}

}  // namespace testing_support

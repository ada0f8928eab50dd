#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "turbsim/dataset.hpp"

namespace turbsim {

struct Detection {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BBox bbox{};
  double score = 0.0;
};

/// Intersection over union of two (x, y, w, h) boxes.
double iou(const BBox& a, const BBox& b);

/// COCO results format: array of {image_id, category_id, bbox, score}.
std::vector<Detection> parse_detections(const nlohmann::json& doc, const std::string& source = "<json>");
std::vector<Detection> load_detections(const std::filesystem::path& path);

struct AreaRange {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
  bool hi_inclusive = true;  // lo is always inclusive
  bool contains(double area) const { return area >= lo && (hi_inclusive ? area <= hi : area < hi); }
};

/// all, small (< 32^2), medium [32^2, 96^2], large (> 96^2).
std::vector<AreaRange> coco_area_ranges();

struct EvalParams {
  std::vector<double> iou_thresholds;  // 0.50:0.05:0.95
  std::vector<double> recall_grid;     // 0:0.01:1
  std::vector<AreaRange> area_ranges;  // first entry must be "all"; small/medium/large feed APS/APM/APL
  int max_dets = 100;                  // per image
  EvalParams();
};

/// The six columns of the result tables. -1 marks a bucket without ground truth.
struct MetricRow {
  double ap = -1, ap50 = -1, ap75 = -1, ap_s = -1, ap_m = -1, ap_l = -1;
  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct CategoryMetrics {
  Category category;
  MetricRow metrics;
  friend bool operator==(const CategoryMetrics&, const CategoryMetrics&) = default;
};

struct EvalReport {
  MetricRow overall;
  std::vector<CategoryMetrics> per_category;
  // ap_cells[a][t][k]: AP of category k at threshold t and area range a, -1 if no ground truth.
  std::vector<std::vector<std::vector<double>>> ap_cells;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// COCO box protocol: greedy score-ordered matching per image and category,
/// crowd ground truth absorbs matches, 101-point interpolated precision.
/// Equal scores are ordered by (image id, category id, box) so the result does
/// not depend on the order of `detections`. Unknown ids, non-positive box
/// sizes or scores outside [0, 1] throw InputError.
EvalReport evaluate(const std::vector<Detection>& detections, const DatasetManifest& truth,
                    const EvalParams& params = {});

nlohmann::json report_to_json(const EvalReport& report, const EvalParams& params = {});
/// Plain-text table: AP AP50 AP75 APS APM APL, as percentages; "-" for -1.
std::string format_report_table(const EvalReport& report, const std::string& label = "all");

}  // namespace turbsim

#include "turbsim/coco_eval.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace turbsim {

using nlohmann::json;

namespace {

// numpy.linspace: start + i * step, last point pinned to stop.
std::vector<double> linspace(double start, double stop, int num) {
  std::vector<double> v(num);
  const double step = (stop - start) / (num - 1);
  for (int i = 0; i < num; ++i) v[i] = start + i * step;
  v.back() = stop;
  return v;
}

double box_area(const BBox& b) { return b[2] * b[3]; }

double overlap(const BBox& d, const BBox& g, bool crowd) {
  const double iw = std::min(d[0] + d[2], g[0] + g[2]) - std::max(d[0], g[0]);
  const double ih = std::min(d[1] + d[3], g[1] + g[3]) - std::max(d[1], g[1]);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = crowd ? box_area(d) : box_area(d) + box_area(g) - inter;
  return inter / uni;
}

bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.image_id != b.image_id) return a.image_id < b.image_id;
  if (a.category_id != b.category_id) return a.category_id < b.category_id;
  return a.bbox < b.bbox;
}

// Matching outcome of one (image, category, area range) cell.
struct CellResult {
  std::vector<const Detection*> dets;   // score order, at most max_dets
  std::vector<std::vector<char>> matched;  // [t][d]
  std::vector<std::vector<char>> ignored;  // [t][d]
  int num_gt = 0;                          // non-ignored ground truth
};

CellResult match_cell(std::vector<const Detection*> dets, const std::vector<const BBoxAnnotation*>& gts_in,
                      const AreaRange& range, const EvalParams& p) {
  CellResult r;
  // Non-ignored ground truth first, original order otherwise.
  std::vector<const BBoxAnnotation*> gts;
  std::vector<char> g_ignore;
  for (int pass = 0; pass < 2; ++pass)
    for (const BBoxAnnotation* g : gts_in) {
      const bool ig = g->iscrowd || !range.contains(g->area);
      if (ig == (pass == 1)) {
        gts.push_back(g);
        g_ignore.push_back(ig);
      }
    }
  for (char ig : g_ignore) r.num_gt += !ig;

  std::sort(dets.begin(), dets.end(), [](const Detection* a, const Detection* b) { return ranks_before(*a, *b); });
  if (static_cast<int>(dets.size()) > p.max_dets) dets.resize(p.max_dets);
  r.dets = dets;

  const std::size_t D = dets.size(), G = gts.size(), T = p.iou_thresholds.size();
  std::vector<double> ious(D * G);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t g = 0; g < G; ++g) ious[d * G + g] = overlap(dets[d]->bbox, gts[g]->bbox, gts[g]->iscrowd);

  r.matched.assign(T, std::vector<char>(D, 0));
  r.ignored.assign(T, std::vector<char>(D, 0));
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<char> g_taken(G, 0);
    for (std::size_t d = 0; d < D; ++d) {
      double best = std::min(p.iou_thresholds[t], 1 - 1e-10);
      long m = -1;
      for (std::size_t g = 0; g < G; ++g) {
        if (g_taken[g] && !gts[g]->iscrowd) continue;
        // Once matched to a real ground truth, stop at the ignored tail.
        if (m > -1 && !g_ignore[m] && g_ignore[g]) break;
        if (ious[d * G + g] < best) continue;
        best = ious[d * G + g];
        m = static_cast<long>(g);
      }
      if (m == -1) {
        r.ignored[t][d] = !range.contains(box_area(dets[d]->bbox));
        continue;
      }
      r.matched[t][d] = 1;
      r.ignored[t][d] = g_ignore[m];
      g_taken[m] = 1;
    }
  }
  return r;
}

// Interpolated AP over the recall grid for one threshold; -1 without ground truth.
double accumulate(const std::vector<const CellResult*>& cells, std::size_t t, const std::vector<double>& grid) {
  int num_gt = 0;
  struct Entry {
    const Detection* det;
    bool tp;
  };
  std::vector<Entry> entries;
  for (const CellResult* c : cells) {
    num_gt += c->num_gt;
    for (std::size_t d = 0; d < c->dets.size(); ++d)
      if (!c->ignored[t][d]) entries.push_back({c->dets[d], c->matched[t][d] != 0});
  }
  if (num_gt == 0) return -1.0;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return ranks_before(*a.det, *b.det); });

  const std::size_t n = entries.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    (entries[i].tp ? tp : fp) += 1;
    recall[i] = tp / num_gt;
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (double r : grid) {
    const auto idx = static_cast<std::size_t>(std::lower_bound(recall.begin(), recall.end(), r) - recall.begin());
    if (idx < n) sum += precision[idx];
  }
  return sum / grid.size();
}

double mean_valid(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v)
    if (x > -1) s += x, ++n;
  return n ? s / n : -1.0;
}

std::size_t threshold_index(const EvalParams& p, double t) {
  for (std::size_t i = 0; i < p.iou_thresholds.size(); ++i)
    if (std::abs(p.iou_thresholds[i] - t) < 1e-9) return i;
  return p.iou_thresholds.size();
}

std::size_t range_index(const EvalParams& p, const std::string& name) {
  for (std::size_t i = 0; i < p.area_ranges.size(); ++i)
    if (p.area_ranges[i].name == name) return i;
  return p.area_ranges.size();
}

// Row of the table from ap_cells restricted to categories `ks`.
MetricRow summarize(const std::vector<std::vector<std::vector<double>>>& cells, const EvalParams& p,
                    const std::vector<std::size_t>& ks) {
  auto collect = [&](std::size_t a, std::optional<std::size_t> t) {
    std::vector<double> v;
    if (a >= cells.size()) return -1.0;
    for (std::size_t ti = 0; ti < p.iou_thresholds.size(); ++ti) {
      if (t && ti != *t) continue;
      for (std::size_t k : ks) v.push_back(cells[a][ti][k]);
    }
    return mean_valid(v);
  };
  const std::size_t all = range_index(p, "all");
  const std::size_t t50 = threshold_index(p, 0.5), t75 = threshold_index(p, 0.75);
  MetricRow r;
  r.ap = collect(all, std::nullopt);
  r.ap50 = t50 < p.iou_thresholds.size() ? collect(all, t50) : -1;
  r.ap75 = t75 < p.iou_thresholds.size() ? collect(all, t75) : -1;
  r.ap_s = collect(range_index(p, "small"), std::nullopt);
  r.ap_m = collect(range_index(p, "medium"), std::nullopt);
  r.ap_l = collect(range_index(p, "large"), std::nullopt);
  return r;
}

}  // namespace

double iou(const BBox& a, const BBox& b) { return overlap(a, b, false); }

std::vector<AreaRange> coco_area_ranges() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {{"all", 0.0, inf, true}, {"small", 0.0, 32.0 * 32.0, false},
          {"medium", 32.0 * 32.0, 96.0 * 96.0, true}, {"large", std::nextafter(96.0 * 96.0, inf), inf, true}};
}

EvalParams::EvalParams()
    : iou_thresholds(linspace(0.5, 0.95, 10)), recall_grid(linspace(0.0, 1.0, 101)), area_ranges(coco_area_ranges()) {}

std::vector<Detection> parse_detections(const json& doc, const std::string& source) {
  if (!doc.is_array()) throw InputError(source + ": detections must be a JSON array");
  std::vector<Detection> out;
  out.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const std::string where = source + ": detections[" + std::to_string(i) + "]";
    const json& j = doc[i];
    if (!j.is_object()) throw InputError(where + ": must be an object");
    Detection d;
    try {
      d.image_id = j.at("image_id").get<std::int64_t>();
      d.category_id = j.at("category_id").get<std::int64_t>();
      d.score = j.at("score").get<double>();
      const json& b = j.at("bbox");
      if (!b.is_array() || b.size() != 4) throw InputError(where + ": bbox must have 4 numbers");
      for (int k = 0; k < 4; ++k) d.bbox[k] = b[k].get<double>();
    } catch (const json::exception& e) {
      throw InputError(where + ": " + e.what());
    }
    out.push_back(d);
  }
  return out;
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": parse error at byte " + std::to_string(e.byte));
  }
  return parse_detections(doc, path.string());
}

EvalReport evaluate(const std::vector<Detection>& detections, const DatasetManifest& truth, const EvalParams& p) {
  if (p.iou_thresholds.empty() || p.recall_grid.empty() || p.area_ranges.empty() || p.max_dets < 1)
    throw ParameterError("evaluate: empty evaluation grid");

  std::map<std::int64_t, std::size_t> image_index, cat_index;
  for (std::size_t i = 0; i < truth.images.size(); ++i) image_index[truth.images[i].id] = i;
  for (std::size_t k = 0; k < truth.categories.size(); ++k) cat_index[truth.categories[k].id] = k;
  const std::size_t I = truth.images.size(), K = truth.categories.size();
  const std::size_t A = p.area_ranges.size(), T = p.iou_thresholds.size();

  // cell (k, i) -> detections / ground truth
  std::vector<std::vector<const Detection*>> dets(K * I);
  std::vector<std::vector<const BBoxAnnotation*>> gts(K * I);
  for (std::size_t n = 0; n < detections.size(); ++n) {
    const Detection& d = detections[n];
    const std::string where = "detection " + std::to_string(n);
    const auto ii = image_index.find(d.image_id);
    if (ii == image_index.end()) throw InputError(where + ": unknown image id " + std::to_string(d.image_id));
    const auto ki = cat_index.find(d.category_id);
    if (ki == cat_index.end()) throw InputError(where + ": unknown category id " + std::to_string(d.category_id));
    if (!(d.bbox[2] > 0) || !(d.bbox[3] > 0) || !std::isfinite(d.bbox[0]) || !std::isfinite(d.bbox[1]) ||
        !std::isfinite(d.bbox[2]) || !std::isfinite(d.bbox[3]))
      throw InputError(where + ": bbox width and height must be positive and finite");
    if (!(d.score >= 0.0 && d.score <= 1.0)) throw InputError(where + ": score must lie in [0, 1]");
    dets[ki->second * I + ii->second].push_back(&d);
  }
  for (const auto& a : truth.annotations) {
    const auto ii = image_index.find(a.image_id);
    const auto ki = cat_index.find(a.category_id);
    if (ii == image_index.end() || ki == cat_index.end())
      throw InputError("ground truth annotation " + std::to_string(a.id) + " has a dangling reference");
    gts[ki->second * I + ii->second].push_back(&a);
  }

  EvalReport report;
  report.ap_cells.assign(A, std::vector<std::vector<double>>(T, std::vector<double>(K, -1.0)));
  // Cells are independent; each writes only its own slots.
#pragma omp parallel for schedule(dynamic) collapse(2)
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<CellResult> results;
      results.reserve(I);
      for (std::size_t i = 0; i < I; ++i) {
        const std::size_t c = k * I + i;
        if (dets[c].empty() && gts[c].empty()) continue;
        results.push_back(match_cell(dets[c], gts[c], p.area_ranges[a], p));
      }
      std::vector<const CellResult*> ptrs;
      for (const auto& r : results) ptrs.push_back(&r);
      for (std::size_t t = 0; t < T; ++t) report.ap_cells[a][t][k] = accumulate(ptrs, t, p.recall_grid);
    }

  std::vector<std::size_t> all_k(K);
  for (std::size_t k = 0; k < K; ++k) all_k[k] = k;
  report.overall = summarize(report.ap_cells, p, all_k);
  for (std::size_t k = 0; k < K; ++k) report.per_category.push_back({truth.categories[k], summarize(report.ap_cells, p, {k})});
  return report;
}

namespace {

json row_json(const MetricRow& r) {
  auto pct = [](double v) { return v < 0 ? json(nullptr) : json(std::round(v * 1000.0) / 10.0); };
  return {{"ap", r.ap},   {"ap50", r.ap50}, {"ap75", r.ap75}, {"ap_s", r.ap_s}, {"ap_m", r.ap_m}, {"ap_l", r.ap_l},
          {"percent",
           {{"ap", pct(r.ap)}, {"ap50", pct(r.ap50)}, {"ap75", pct(r.ap75)}, {"ap_s", pct(r.ap_s)},
            {"ap_m", pct(r.ap_m)}, {"ap_l", pct(r.ap_l)}}}};
}

std::string cell(double v) {
  if (v < 0) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v * 100.0);
  return buf;
}

}  // namespace

json report_to_json(const EvalReport& r, const EvalParams& p) {
  json per = json::array();
  for (const auto& c : r.per_category) {
    json j = row_json(c.metrics);
    j["category_id"] = c.category.id;
    j["name"] = c.category.name;
    per.push_back(std::move(j));
  }
  json ranges = json::array();
  for (const auto& a : p.area_ranges)
    ranges.push_back({{"name", a.name},
                      {"min", a.lo},
                      {"max", std::isinf(a.hi) ? json(nullptr) : json(a.hi)},
                      {"max_inclusive", a.hi_inclusive}});
  json out = row_json(r.overall);
  out["per_category"] = per;
  out["protocol"] = {{"iou_thresholds", p.iou_thresholds},
                     {"recall_points", p.recall_grid.size()},
                     {"max_dets", p.max_dets},
                     {"area_ranges", ranges},
                     {"empty_bucket", -1}};
  return out;
}

std::string format_report_table(const EvalReport& r, const std::string& label) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-16s %6s %6s %6s %6s %6s %6s\n", "", "AP", "AP50", "AP75", "APS", "APM", "APL");
  os << line;
  auto row = [&](const std::string& name, const MetricRow& m) {
    std::snprintf(line, sizeof line, "%-16s %6s %6s %6s %6s %6s %6s\n", name.substr(0, 16).c_str(), cell(m.ap).c_str(),
                  cell(m.ap50).c_str(), cell(m.ap75).c_str(), cell(m.ap_s).c_str(), cell(m.ap_m).c_str(),
                  cell(m.ap_l).c_str());
    os << line;
  };
  row(label, r.overall);
  for (const auto& c : r.per_category) row("  " + c.category.name, c.metrics);
  return os.str();
}

}  // namespace turbsim

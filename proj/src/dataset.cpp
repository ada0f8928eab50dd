#include "turbsim/dataset.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "turbsim/kernels.hpp"
#include "turbsim/random.hpp"

namespace turbsim {

using nlohmann::json;

namespace {

[[noreturn]] void schema(const std::string& where, const std::string& what) {
  throw DatasetError(DatasetErrorKind::schema, where + ": " + what);
}

std::int64_t get_id(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) schema(where, std::string("missing '") + key + "'");
  const json& v = obj.at(key);
  if (!v.is_number_integer()) schema(where, std::string("'") + key + "' must be an integer");
  return v.get<std::int64_t>();
}

std::string get_string(const json& obj, const char* key, const std::string& where, bool required = true) {
  if (!obj.contains(key)) {
    if (required) schema(where, std::string("missing '") + key + "'");
    return {};
  }
  if (!obj.at(key).is_string()) schema(where, std::string("'") + key + "' must be a string");
  return obj.at(key).get<std::string>();
}

const json& get_array(const json& doc, const char* key, const std::string& source) {
  if (!doc.contains(key)) schema(source, std::string("missing top-level '") + key + "' array");
  if (!doc.at(key).is_array()) schema(source, std::string("'") + key + "' must be an array");
  return doc.at(key);
}

}  // namespace

DatasetManifest parse_coco(const json& doc, const std::string& source) {
  if (!doc.is_object()) schema(source, "top level must be an object");
  DatasetManifest m;
  std::map<std::int64_t, std::size_t> image_index;
  std::set<std::int64_t> category_ids, annotation_ids;

  const json& images = get_array(doc, "images", source);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = source + ": images[" + std::to_string(i) + "]";
    const json& j = images[i];
    if (!j.is_object()) schema(where, "must be an object");
    ImageRecord r;
    r.id = get_id(j, "id", where);
    r.file_name = get_string(j, "file_name", where);
    r.width = static_cast<int>(get_id(j, "width", where));
    r.height = static_cast<int>(get_id(j, "height", where));
    if (r.width <= 0 || r.height <= 0) schema(where, "width and height must be positive");
    if (!image_index.emplace(r.id, m.images.size()).second)
      throw DatasetError(DatasetErrorKind::duplicate_id, where + ": duplicate image id " + std::to_string(r.id));
    m.images.push_back(std::move(r));
  }

  const json& cats = get_array(doc, "categories", source);
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = source + ": categories[" + std::to_string(i) + "]";
    const json& j = cats[i];
    if (!j.is_object()) schema(where, "must be an object");
    Category c;
    c.id = get_id(j, "id", where);
    c.name = get_string(j, "name", where);
    c.supercategory = get_string(j, "supercategory", where, false);
    if (!category_ids.insert(c.id).second)
      throw DatasetError(DatasetErrorKind::duplicate_id, where + ": duplicate category id " + std::to_string(c.id));
    m.categories.push_back(std::move(c));
  }

  const json& anns = get_array(doc, "annotations", source);
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string where = source + ": annotations[" + std::to_string(i) + "]";
    const json& j = anns[i];
    if (!j.is_object()) schema(where, "must be an object");
    BBoxAnnotation a;
    a.id = get_id(j, "id", where);
    a.image_id = get_id(j, "image_id", where);
    a.category_id = get_id(j, "category_id", where);
    if (j.contains("iscrowd")) a.iscrowd = static_cast<int>(get_id(j, "iscrowd", where));
    if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4)
      schema(where, "'bbox' must be an array of 4 numbers");
    for (int k = 0; k < 4; ++k) {
      if (!j["bbox"][k].is_number()) schema(where, "'bbox' must be an array of 4 numbers");
      a.bbox[k] = j["bbox"][k].get<double>();
      if (!std::isfinite(a.bbox[k])) schema(where, "'bbox' values must be finite");
    }
    if (!(a.bbox[2] > 0.0) || !(a.bbox[3] > 0.0)) schema(where, "bbox width and height must be positive");
    if (!annotation_ids.insert(a.id).second)
      throw DatasetError(DatasetErrorKind::duplicate_id, where + ": duplicate annotation id " + std::to_string(a.id));
    auto it = image_index.find(a.image_id);
    if (it == image_index.end())
      throw DatasetError(DatasetErrorKind::dangling_reference,
                         where + ": references missing image id " + std::to_string(a.image_id));
    if (!category_ids.count(a.category_id))
      throw DatasetError(DatasetErrorKind::dangling_reference,
                         where + ": references missing category id " + std::to_string(a.category_id));
    const ImageRecord& img = m.images[it->second];
    const double x0 = std::clamp(a.bbox[0], 0.0, double(img.width));
    const double y0 = std::clamp(a.bbox[1], 0.0, double(img.height));
    const double x1 = std::clamp(a.bbox[0] + a.bbox[2], 0.0, double(img.width));
    const double y1 = std::clamp(a.bbox[1] + a.bbox[3], 0.0, double(img.height));
    if (!(x1 > x0) || !(y1 > y0)) schema(where, "bbox lies outside its image");
    a.bbox = {x0, y0, x1 - x0, y1 - y0};
    a.area = a.bbox[2] * a.bbox[3];
    m.annotations.push_back(a);
  }
  return m;
}

DatasetManifest load_coco(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DatasetError(DatasetErrorKind::parse, path.string() + ": parse error at byte " + std::to_string(e.byte));
  }
  return parse_coco(doc, path.string());
}

json to_coco_json(const DatasetManifest& m) {
  json images = json::array(), anns = json::array(), cats = json::array();
  for (const auto& r : m.images)
    images.push_back({{"id", r.id}, {"file_name", r.file_name}, {"width", r.width}, {"height", r.height}});
  for (const auto& a : m.annotations)
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", a.category_id},
                    {"bbox", a.bbox},
                    {"area", a.bbox[2] * a.bbox[3]},
                    {"iscrowd", a.iscrowd}});
  for (const auto& c : m.categories) {
    json j{{"id", c.id}, {"name", c.name}};
    if (!c.supercategory.empty()) j["supercategory"] = c.supercategory;
    cats.push_back(std::move(j));
  }
  return {{"images", images}, {"annotations", anns}, {"categories", cats}};
}

void save_coco(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_coco_json(m).dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest filter_categories(const DatasetManifest& m, const std::vector<std::string>& keep) {
  if (keep.empty()) throw ParameterError("filter_categories: keep list is empty");
  for (const auto& name : keep) {
    const bool known =
        std::any_of(m.categories.begin(), m.categories.end(), [&](const Category& c) { return c.name == name; });
    if (!known) throw ParameterError("filter_categories: unknown category '" + name + "'");
  }
  DatasetManifest out;
  out.images = m.images;
  std::map<std::int64_t, std::int64_t> remap;
  for (const auto& c : m.categories)
    if (std::find(keep.begin(), keep.end(), c.name) != keep.end()) {
      Category nc = c;
      nc.id = static_cast<std::int64_t>(out.categories.size()) + 1;
      remap[c.id] = nc.id;
      out.categories.push_back(nc);
    }
  for (const auto& a : m.annotations) {
    auto it = remap.find(a.category_id);
    if (it == remap.end()) continue;
    BBoxAnnotation na = a;
    na.category_id = it->second;
    out.annotations.push_back(na);
  }
  return out;
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& m, double train_fraction, Seed seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ParameterError("split: fraction must be in (0, 1)");
  const std::size_t n = m.images.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = derive_seed(seed, i).value % i;
    std::swap(order[i - 1], order[j]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  std::vector<bool> is_train(n, false);
  for (std::size_t k = 0; k < n_train; ++k) is_train[order[k]] = true;

  DatasetManifest train, val;
  train.categories = val.categories = m.categories;
  std::map<std::int64_t, bool> image_train;
  for (std::size_t i = 0; i < n; ++i) {
    (is_train[i] ? train : val).images.push_back(m.images[i]);
    image_train[m.images[i].id] = is_train[i];
  }
  for (const auto& a : m.annotations) (image_train.at(a.image_id) ? train : val).annotations.push_back(a);
  return {train, val};
}

std::vector<std::pair<std::string, std::optional<double>>> augmentation_settings(const RunConfig& c) {
  std::vector<std::pair<std::string, std::optional<double>>> out;
  if (c.method == Method::geometric) {
    for (double g : c.gamma_levels) {
      std::ostringstream label;
      label << "geometric_g" << g;
      out.emplace_back(label.str(), g);
    }
  } else {
    out.emplace_back(method_name(c.method), std::nullopt);
  }
  return out;
}

Seed augmentation_seed(std::uint64_t master_seed, std::int64_t image_id, int setting_index) {
  return derive_seed(Seed{master_seed}, static_cast<std::uint64_t>(image_id), static_cast<std::uint64_t>(setting_index));
}

BBox warp_box(const BBox& box, const DistortionField& field) {
  const double w = field.width(), h = field.height();
  double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  for (double cx : {box[0], box[0] + box[2]})
    for (double cy : {box[1], box[1] + box[3]}) {
      // Content at p ends up near p - d(p) under the backward warp.
      const double nx = cx - bilinear_sample(field.du, cx, cy);
      const double ny = cy - bilinear_sample(field.dv, cx, cy);
      x0 = std::min(x0, nx), x1 = std::max(x1, nx);
      y0 = std::min(y0, ny), y1 = std::max(y1, ny);
    }
  x0 = std::clamp(x0, 0.0, w), x1 = std::clamp(x1, 0.0, w);
  y0 = std::clamp(y0, 0.0, h), y1 = std::clamp(y1, 0.0, h);
  if (!(x1 > x0) || !(y1 > y0)) return box;  // degenerate after clamping: keep original
  return {x0, y0, x1 - x0, y1 - y0};
}

AugmentResult augment_dataset(const DatasetManifest& manifest, const AugmentationJob& job) {
  const Simulator sim(job.config);
  const auto settings = augmentation_settings(job.config);
  const std::filesystem::path image_out = job.output_dir / "images";
  std::filesystem::create_directories(image_out);

  std::map<std::int64_t, std::vector<const BBoxAnnotation*>> by_image;
  for (const auto& a : manifest.annotations) by_image[a.image_id].push_back(&a);

  struct Produced {
    std::string file_name;
    int width = 0, height = 0;
    std::vector<BBox> boxes;  // parallel to by_image[id]
    std::uint64_t seed = 0;
    json params;
  };
  struct Slot {
    std::vector<Produced> outputs;  // one per setting
    std::optional<std::string> error;
  };
  const int n = static_cast<int>(manifest.images.size());
  std::vector<Slot> slots(n);
  const int workers = job.config.workers > 0 ? job.config.workers : omp_get_max_threads();

#pragma omp parallel for num_threads(workers) schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    const ImageRecord& rec = manifest.images[i];
    try {
      const Image src = read_image(job.image_dir / rec.file_name);
      const auto anns_it = by_image.find(rec.id);
      const std::string stem = std::filesystem::path(rec.file_name).stem().string();
      for (int s = 0; s < static_cast<int>(settings.size()); ++s) {
        const Seed seed = augmentation_seed(job.master_seed, rec.id, s);
        const SimOutput out = sim.run(src, seed, settings[s].second);
        Produced p;
        p.file_name = "images/" + stem + "_" + settings[s].first + ".png";
        p.width = src.width();
        p.height = src.height();
        p.seed = seed.value;
        p.params = method_params_json(job.config);
        if (settings[s].second) p.params["gamma"] = *settings[s].second;
        if (anns_it != by_image.end())
          for (const BBoxAnnotation* a : anns_it->second)
            p.boxes.push_back(job.warp_boxes ? warp_box(a->bbox, out.field) : a->bbox);
        write_image(job.output_dir / p.file_name, out.image, job.output_depth);
        slots[i].outputs.push_back(std::move(p));
      }
    } catch (const std::exception& e) {
      slots[i].outputs.clear();
      slots[i].error = e.what();
    }
  }

  AugmentResult result;
  result.manifest.categories = manifest.categories;
  result.manifest_path = job.output_dir / "annotations.json";
  result.provenance_path = job.output_dir / "provenance.jsonl";
  std::ofstream prov(result.provenance_path);
  if (!prov) throw IoError("cannot write " + result.provenance_path.string());
  std::int64_t next_image = 1, next_ann = 1;
  for (int i = 0; i < n; ++i) {
    const ImageRecord& rec = manifest.images[i];
    if (slots[i].error) {
      result.failures.push_back({rec.id, rec.file_name, *slots[i].error});
      continue;
    }
    const auto anns_it = by_image.find(rec.id);
    for (std::size_t s = 0; s < slots[i].outputs.size(); ++s) {
      const Produced& p = slots[i].outputs[s];
      const std::int64_t id = next_image++;
      result.manifest.images.push_back({id, p.file_name, p.width, p.height});
      if (anns_it != by_image.end())
        for (std::size_t k = 0; k < anns_it->second.size(); ++k) {
          BBoxAnnotation a = *anns_it->second[k];
          a.id = next_ann++;
          a.image_id = id;
          a.bbox = p.boxes[k];
          a.area = a.bbox[2] * a.bbox[3];
          result.manifest.annotations.push_back(a);
        }
      ++result.per_setting[settings[s].first];
      json record{{"image_id", id},
                  {"file_name", p.file_name},
                  {"source_image_id", rec.id},
                  {"source_file_name", rec.file_name},
                  {"simulator", method_name(job.config.method)},
                  {"setting", settings[s].first},
                  {"setting_index", s},
                  {"params", p.params},
                  {"seed", p.seed},
                  {"boxes_warped", job.warp_boxes}};
      prov << record.dump() << '\n';
    }
  }
  save_coco(result.manifest, result.manifest_path);
  return result;
}

}  // namespace turbsim

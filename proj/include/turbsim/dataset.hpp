#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "turbsim/config.hpp"
#include "turbsim/image_io.hpp"

namespace turbsim {

using BBox = std::array<double, 4>;  // x, y, width, height (COCO)

struct ImageRecord {
  std::int64_t id = 0;
  std::string file_name;
  int width = 0;
  int height = 0;
  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct BBoxAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BBox bbox{};
  double area = 0.0;  // always width * height
  int iscrowd = 0;
  friend bool operator==(const BBoxAnnotation&, const BBoxAnnotation&) = default;
};

struct Category {
  std::int64_t id = 0;
  std::string name;
  std::string supercategory;
  friend bool operator==(const Category&, const Category&) = default;
};

struct DatasetManifest {
  std::vector<ImageRecord> images;
  std::vector<BBoxAnnotation> annotations;
  std::vector<Category> categories;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

enum class DatasetErrorKind { parse, schema, dangling_reference, duplicate_id };

/// Manifest problems, with the offending location in the message.
class DatasetError : public InputError {
public:
  DatasetError(DatasetErrorKind kind, const std::string& what) : InputError(what), kind_(kind) {}
  DatasetErrorKind kind() const { return kind_; }

private:
  DatasetErrorKind kind_;
};

/// Validates ids and references. Boxes are clamped to the image bounds and
/// areas recomputed; boxes with non-positive size are schema errors.
DatasetManifest parse_coco(const nlohmann::json& doc, const std::string& source = "<json>");
DatasetManifest load_coco(const std::filesystem::path& path);
nlohmann::json to_coco_json(const DatasetManifest& manifest);
void save_coco(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Keeps annotations of the named categories and renumbers those categories
/// 1..k in their original order. Images without remaining annotations stay.
DatasetManifest filter_categories(const DatasetManifest& manifest, const std::vector<std::string>& keep);

/// Image-level split: a seeded Fisher-Yates shuffle picks round(f * N) training
/// images. Both parts keep the original image order.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& manifest, double train_fraction, Seed seed);

struct AugmentationJob {
  RunConfig config;                      // simulator, parameters, gamma grid, role, workers
  std::uint64_t master_seed = kDefaultSeed;
  std::filesystem::path image_dir;       // source file_name values are relative to this
  std::filesystem::path output_dir;
  BitDepth output_depth = BitDepth::k8;
  bool warp_boxes = false;               // extension: move boxes with the sampled distortion
};

struct ImageFailure {
  std::int64_t image_id = 0;
  std::string file_name;
  std::string message;
};

struct AugmentResult {
  DatasetManifest manifest;                  // also written to output_dir/annotations.json
  std::vector<ImageFailure> failures;
  std::map<std::string, int> per_setting;    // setting label -> images written
  std::filesystem::path manifest_path;
  std::filesystem::path provenance_path;     // JSON lines
};

/// One simulator setting per gamma level (geometric) or a single setting
/// (zernike, p2s). Labels are "geometric_g25", "zernike", "p2s".
std::vector<std::pair<std::string, std::optional<double>>> augmentation_settings(const RunConfig& config);

/// Per-image seed: derive_seed(master, image id, setting index).
Seed augmentation_seed(std::uint64_t master_seed, std::int64_t image_id, int setting_index);

/// Simulates every (image, setting) pair in parallel with job.config.workers
/// threads. Outputs are ordered by source image and then setting regardless of
/// scheduling. Unreadable images are reported in `failures` and skipped.
AugmentResult augment_dataset(const DatasetManifest& manifest, const AugmentationJob& job);

/// Axis-aligned box around the four corners moved by the backward-warp field.
BBox warp_box(const BBox& box, const DistortionField& field);

}  // namespace turbsim

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "dataset_fixture.hpp"
#include "turbsim/dataset.hpp"

using namespace turbsim;
using nlohmann::json;

namespace {

json minimal_doc() {
  return json::parse(R"({
    "images": [{"id": 1, "file_name": "a.png", "width": 64, "height": 48}],
    "annotations": [{"id": 5, "image_id": 1, "category_id": 3, "bbox": [4, 5, 10, 12], "iscrowd": 0}],
    "categories": [{"id": 3, "name": "car"}]
  })");
}

DatasetErrorKind kind_of(const json& doc) {
  try {
    parse_coco(doc);
  } catch (const DatasetError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no DatasetError";
  return DatasetErrorKind::parse;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

RunConfig geometric_job_config(int workers) {
  RunConfig c = preset("table1");
  c.workers = workers;
  return c;
}

}  // namespace

TEST(Coco, MinimalFile) {
  const auto m = parse_coco(minimal_doc());
  EXPECT_EQ(m.images.size(), 1u);
  EXPECT_EQ(m.annotations.size(), 1u);
  EXPECT_DOUBLE_EQ(m.annotations[0].area, 120.0);
}

TEST(Coco, DistinctErrors) {
  json dangling = minimal_doc();
  dangling["annotations"][0]["image_id"] = 77;
  EXPECT_EQ(kind_of(dangling), DatasetErrorKind::dangling_reference);
  try {
    parse_coco(dangling, "x.json");
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("77"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("annotations[0]"), std::string::npos);
  }

  json bad_cat = minimal_doc();
  bad_cat["annotations"][0]["category_id"] = 9;
  EXPECT_EQ(kind_of(bad_cat), DatasetErrorKind::dangling_reference);

  json dup = minimal_doc();
  dup["images"].push_back(dup["images"][0]);
  EXPECT_EQ(kind_of(dup), DatasetErrorKind::duplicate_id);

  json dup_ann = minimal_doc();
  dup_ann["annotations"].push_back(dup_ann["annotations"][0]);
  EXPECT_EQ(kind_of(dup_ann), DatasetErrorKind::duplicate_id);

  json no_size = minimal_doc();
  no_size["annotations"][0]["bbox"] = {1, 1, 0, 3};
  EXPECT_EQ(kind_of(no_size), DatasetErrorKind::schema);

  json missing = minimal_doc();
  missing.erase("categories");
  EXPECT_EQ(kind_of(missing), DatasetErrorKind::schema);

  const auto dir = testing_support::scratch_dir("coco_err");
  std::ofstream(dir / "broken.json") << "{\"images\": [";
  try {
    load_coco(dir / "broken.json");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.kind(), DatasetErrorKind::parse);
  }
  EXPECT_THROW(load_coco(dir / "absent.json"), IoError);
}

TEST(Coco, BoxesClampedToImage) {
  json doc = minimal_doc();
  doc["annotations"][0]["bbox"] = {-2, 40, 10, 20};
  const auto m = parse_coco(doc);
  EXPECT_EQ(m.annotations[0].bbox, (BBox{0, 40, 8, 8}));
  EXPECT_DOUBLE_EQ(m.annotations[0].area, 64.0);
  doc["annotations"][0]["bbox"] = {70, 10, 5, 5};
  EXPECT_EQ(kind_of(doc), DatasetErrorKind::schema);
}

TEST(Coco, RoundTrip) {
  const auto dir = testing_support::scratch_dir("coco_rt");
  const auto m = testing_support::write_fixture_dataset(dir, 6, 40, 32, 1);
  save_coco(m, dir / "a.json");
  const auto r = load_coco(dir / "a.json");
  EXPECT_EQ(r, m);
  save_coco(r, dir / "b.json");
  EXPECT_EQ(read_file(dir / "a.json"), read_file(dir / "b.json"));
}

TEST(FilterCategories, CarAndPersonOnly) {
  const auto dir = testing_support::scratch_dir("filter");
  const auto m = testing_support::write_fixture_dataset(dir, 30, 40, 32, 2);
  ASSERT_EQ(m.categories.size(), 15u);
  const auto f = filter_categories(m, {"car", "person"});
  ASSERT_EQ(f.categories.size(), 2u);
  EXPECT_EQ(f.categories[0].name, "person");
  EXPECT_EQ(f.categories[1].name, "car");
  EXPECT_EQ(f.categories[0].id, 1);
  EXPECT_EQ(f.categories[1].id, 2);
  EXPECT_EQ(f.images, m.images);
  std::size_t expected = 0;
  for (const auto& a : m.annotations) expected += (a.category_id == 1 || a.category_id == 3);
  EXPECT_EQ(f.annotations.size(), expected);
  for (const auto& a : f.annotations) EXPECT_TRUE(a.category_id == 1 || a.category_id == 2);
  EXPECT_NO_THROW(parse_coco(to_coco_json(f)));
}

TEST(FilterCategories, KeepAllAndEmptyResult) {
  const auto dir = testing_support::scratch_dir("filter2");
  const auto m = testing_support::write_fixture_dataset(dir, 10, 40, 32, 3);
  const auto all = filter_categories(m, testing_support::flir_categories());
  EXPECT_EQ(all, m);  // ids are already dense

  DatasetManifest no_cars = m;
  std::erase_if(no_cars.annotations, [](const BBoxAnnotation& a) { return a.category_id == 3; });
  const auto f = filter_categories(no_cars, {"car"});
  EXPECT_TRUE(f.annotations.empty());
  EXPECT_EQ(f.images.size(), 10u);

  EXPECT_THROW(filter_categories(m, {"zebra"}), ParameterError);
  EXPECT_THROW(filter_categories(m, {}), ParameterError);
}

TEST(Split, NinetyTenPartition) {
  const auto dir = testing_support::scratch_dir("split");
  const auto m = testing_support::write_fixture_dataset(dir, 10, 16, 16, 4);
  const auto [train, val] = split(m, 0.9, Seed{1});
  EXPECT_EQ(train.images.size(), 9u);
  EXPECT_EQ(val.images.size(), 1u);
  std::set<std::int64_t> ids;
  for (const auto& r : train.images) ids.insert(r.id);
  for (const auto& r : val.images) EXPECT_TRUE(ids.insert(r.id).second);
  EXPECT_EQ(ids.size(), 10u);
  EXPECT_EQ(train.annotations.size() + val.annotations.size(), m.annotations.size());
  for (const auto& a : val.annotations) EXPECT_EQ(a.image_id, val.images[0].id);

  const auto again = split(m, 0.9, Seed{1});
  EXPECT_EQ(again.first, train);
  EXPECT_EQ(again.second, val);
  EXPECT_THROW(split(m, 1.0, Seed{1}), ParameterError);
  EXPECT_THROW(split(m, 0.0, Seed{1}), ParameterError);
}

TEST(Split, LargerSetUsesRounding) {
  DatasetManifest m;
  for (int i = 0; i < 9711; ++i) m.images.push_back({i + 1, "f", 640, 512});
  const auto [train, val] = split(m, 0.9, Seed{3});
  EXPECT_EQ(train.images.size(), 8740u);
  EXPECT_EQ(val.images.size(), 971u);
  const auto other = split(m, 0.9, Seed{4});
  EXPECT_NE(other.first.images, train.images);
}

TEST(Augment, GammaGridQuadruplesDataset) {
  const auto dir = testing_support::scratch_dir("aug_grid");
  const auto m = testing_support::write_fixture_dataset(dir, 10, 48, 40, 5);
  AugmentationJob job;
  job.config = geometric_job_config(2);
  job.image_dir = dir;
  job.output_dir = dir / "out";
  const auto r = augment_dataset(m, job);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.manifest.images.size(), 40u);
  EXPECT_EQ(r.manifest.annotations.size(), 4 * m.annotations.size());
  EXPECT_EQ(r.per_setting.size(), 4u);
  for (const auto& [label, count] : r.per_setting) EXPECT_EQ(count, 10) << label;
  EXPECT_EQ(r.manifest.categories, m.categories);

  // Box geometry copied exactly, in source-then-setting order.
  std::size_t k = 0;
  for (const auto& src : m.images)
    for (int s = 0; s < 4; ++s)
      for (const auto& a : m.annotations)
        if (a.image_id == src.id) {
          const auto& o = r.manifest.annotations.at(k++);
          EXPECT_EQ(o.bbox, a.bbox);
          EXPECT_EQ(o.area, a.area);
          EXPECT_EQ(o.category_id, a.category_id);
          EXPECT_EQ(o.iscrowd, a.iscrowd);
        }
  EXPECT_EQ(k, r.manifest.annotations.size());

  // The written manifest is valid and matches the returned one.
  EXPECT_EQ(load_coco(r.manifest_path), r.manifest);
  for (const auto& img : r.manifest.images) EXPECT_TRUE(std::filesystem::exists(job.output_dir / img.file_name));
}

TEST(Augment, ProvenanceComplete) {
  const auto dir = testing_support::scratch_dir("aug_prov");
  const auto m = testing_support::write_fixture_dataset(dir, 4, 32, 32, 6);
  AugmentationJob job;
  job.config = geometric_job_config(1);
  job.master_seed = 99;
  job.image_dir = dir;
  job.output_dir = dir / "out";
  const auto r = augment_dataset(m, job);
  std::ifstream in(r.provenance_path);
  std::string line;
  std::set<std::int64_t> seen;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const json rec = json::parse(line);
    ++lines;
    EXPECT_TRUE(seen.insert(rec["image_id"].get<std::int64_t>()).second);
    EXPECT_EQ(rec["simulator"], "geometric");
    const auto src_id = rec["source_image_id"].get<std::int64_t>();
    const int s = rec["setting_index"].get<int>();
    EXPECT_EQ(rec["seed"].get<std::uint64_t>(), augmentation_seed(99, src_id, s).value);
    EXPECT_EQ(rec["params"]["gamma"].get<double>(), job.config.gamma_levels[s]);
    EXPECT_TRUE(rec.contains("source_file_name"));
  }
  EXPECT_EQ(lines, r.manifest.images.size());
  EXPECT_EQ(seen.size(), lines);
}

TEST(Augment, TestRoleEmitsGamma100Only) {
  const auto dir = testing_support::scratch_dir("aug_test_role");
  const auto m = testing_support::write_fixture_dataset(dir, 3, 32, 32, 7);
  AugmentationJob job;
  job.config = apply_config_json(preset("table1"), json::parse(R"({"augment": {"role": "test-aug"}})"));
  job.image_dir = dir;
  job.output_dir = dir / "out";
  const auto r = augment_dataset(m, job);
  EXPECT_EQ(r.manifest.images.size(), 3u);
  ASSERT_EQ(r.per_setting.size(), 1u);
  EXPECT_EQ(r.per_setting.begin()->first, "geometric_g100");
}

TEST(Augment, DeterministicAcrossRunsAndWorkers) {
  const auto dir = testing_support::scratch_dir("aug_det");
  const auto m = testing_support::write_fixture_dataset(dir, 8, 40, 32, 8);
  std::vector<std::filesystem::path> outs;
  for (int workers : {1, 4, 4}) {
    AugmentationJob job;
    job.config = geometric_job_config(workers);
    job.image_dir = dir;
    job.output_dir = dir / ("out" + std::to_string(outs.size()));
    job.output_depth = BitDepth::k16;
    augment_dataset(m, job);
    outs.push_back(job.output_dir);
  }
  const auto names = load_coco(outs[0] / "annotations.json");
  for (std::size_t k = 1; k < outs.size(); ++k) {
    EXPECT_EQ(read_file(outs[0] / "annotations.json"), read_file(outs[k] / "annotations.json"));
    EXPECT_EQ(read_file(outs[0] / "provenance.jsonl"), read_file(outs[k] / "provenance.jsonl"));
    for (const auto& img : names.images)
      EXPECT_EQ(read_file(outs[0] / img.file_name), read_file(outs[k] / img.file_name)) << img.file_name;
  }
}

TEST(Augment, UnreadableImageCollected) {
  const auto dir = testing_support::scratch_dir("aug_fail");
  auto m = testing_support::write_fixture_dataset(dir, 4, 32, 32, 9);
  std::filesystem::remove(dir / m.images[1].file_name);
  AugmentationJob job;
  job.config = geometric_job_config(2);
  job.image_dir = dir;
  job.output_dir = dir / "out";
  const auto r = augment_dataset(m, job);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_EQ(r.failures[0].image_id, m.images[1].id);
  EXPECT_EQ(r.failures[0].file_name, m.images[1].file_name);
  EXPECT_EQ(r.manifest.images.size(), 12u);
  EXPECT_NO_THROW(load_coco(r.manifest_path));
}

TEST(Augment, WarpBoxesExtension) {
  const auto dir = testing_support::scratch_dir("aug_warp");
  const auto m = testing_support::write_fixture_dataset(dir, 3, 48, 48, 10);
  AugmentationJob job;
  job.config = geometric_job_config(1);
  job.image_dir = dir;
  job.output_dir = dir / "out";
  job.warp_boxes = true;
  const auto r = augment_dataset(m, job);
  for (const auto& a : r.manifest.annotations) {
    EXPECT_GT(a.bbox[2], 0.0);
    EXPECT_LE(a.bbox[0] + a.bbox[2], 48.0 + 1e-9);
  }
  EXPECT_NO_THROW(load_coco(r.manifest_path));

  // Zero field leaves boxes alone; a uniform field shifts them.
  DistortionField f(20, 20);
  EXPECT_EQ(warp_box({2, 3, 5, 6}, f), (BBox{2, 3, 5, 6}));
  for (double& v : f.du.pixels()) v = 1.5;
  EXPECT_EQ(warp_box({2, 3, 5, 6}, f), (BBox{0.5, 3, 5, 6}));
}

TEST(Augment, OtherSimulatorsSingleSetting) {
  const auto dir = testing_support::scratch_dir("aug_zern");
  const auto m = testing_support::write_fixture_dataset(dir, 2, 40, 40, 11);
  AugmentationJob job;
  job.config = preset("table2");
  job.image_dir = dir;
  job.output_dir = dir / "out";
  const auto r = augment_dataset(m, job);
  EXPECT_EQ(r.manifest.images.size(), 2u);
  EXPECT_EQ(r.per_setting.at("zernike"), 2);
  EXPECT_EQ(r.manifest.annotations.size(), m.annotations.size());
}

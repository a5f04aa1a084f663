#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "lingscrub/dataset.hpp"

using namespace lingscrub;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lingscrub_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("fmat round trip") {
  TempDir dir("fmat");
  FeatureMatrix m;
  m.values = Matrix{{1, 2, 3}, {4, 5, 6}};
  m.layer_index = 3;
  const auto path = dir.path / "m.fmat";
  save_matrix(m, path);

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  CHECK(in.tellg() - payload_start == 24);

  const auto back = load_features(path);
  CHECK(back.values == m.values);
  CHECK(back.layer_index == 3);
  const auto h = read_matrix_header(path);
  CHECK(h.rows == 2);
  CHECK(h.cols == 3);
  CHECK(h.kind == "word");
}

TEST_CASE("fmat errors") {
  TempDir dir("fmat_err");
  FeatureMatrix m;
  m.values = Matrix{{1, std::nan("")}};
  CHECK(error_of([&] { save_matrix(m, dir.path / "nan.fmat"); }).find("non-finite value at (0,1)") != std::string::npos);

  m.values = Matrix::Random(5, 4).cast<float>().cast<double>();
  save_matrix(m, dir.path / "ok.fmat");
  CHECK(load_features(dir.path / "ok.fmat").values == m.values);

  fs::resize_file(dir.path / "ok.fmat", fs::file_size(dir.path / "ok.fmat") - 4);
  CHECK(error_of([&] { load_features(dir.path / "ok.fmat"); }).find("truncated payload") != std::string::npos);

  std::ofstream(dir.path / "f64.fmat") << R"({"rows":1,"cols":1,"dtype":"f64","kind":"word","layer":1})" << "\n12345678";
  CHECK(error_of([&] { load_features(dir.path / "f64.fmat"); }).find("unsupported dtype") != std::string::npos);
}

TEST_CASE("labels") {
  Eigen::MatrixXi l(3, 1);
  l << 0, 1, 0;
  CHECK(make_label_table({"t"}, l).class_counts == std::vector<int>{2});
  l << 0, 2, 0;
  CHECK(error_of([&] { make_label_table({"t"}, l); }).find("class 1 unused in task") != std::string::npos);

  TempDir dir("labels");
  Eigen::MatrixXi six = Eigen::MatrixXi::Zero(4, 6);
  six.row(1).setOnes();
  const auto table = make_label_table({"a", "b", "c", "d", "e", "f"}, six);
  save_labels(table, dir.path / "labels.tsv");
  const auto back = load_labels(dir.path / "labels.tsv");
  CHECK(back.tasks() == 6);
  CHECK(back.labels == six);
}

TEST_CASE("timeline round trip") {
  TempDir dir("timeline");
  const auto tl = uniform_timeline(25, 10, 1.5, 5);
  save_timeline(tl, dir.path / "t.tsv");
  const auto back = load_timeline(dir.path / "t.tsv");
  CHECK(back.sentence_index == tl.sentence_index);
  CHECK(back.onset_seconds.size() == 25);
}

TEST_CASE("atlas") {
  const auto atlas = make_atlas({"PFm", "PFm", "44", "45"});
  CHECK(atlas.voxels_in_roi("AG") == IndexList{0, 1});
  CHECK(atlas.voxels_in_roi("IFG") == IndexList{2, 3});
  CHECK(atlas.roi_groups.size() == 8);
  CHECK(default_roi_groups().at("AG") == std::vector<std::string>{"PFm", "PGs", "PGi", "TPOJ2", "TPOJ3"});
  CHECK(default_roi_groups().at("IFG") == std::vector<std::string>{"44", "45", "IFJa", "IFSp"});

  TempDir dir("atlas");
  save_atlas_csv(atlas, dir.path / "atlas.csv");
  std::ofstream(dir.path / "rois.json") << R"({"X": ["nope"]})";
  CHECK(error_of([&] { load_atlas(dir.path / "atlas.csv", dir.path / "rois.json"); }).find("unknown parcel nope") !=
        std::string::npos);
  std::ofstream(dir.path / "empty.json") << "";
  CHECK(load_atlas(dir.path / "atlas.csv", dir.path / "empty.json").roi_groups.size() == 8);
}

TEST_CASE("dataset validation") {
  std::vector<MatrixHeader> layers;
  for (int l = 1; l <= 12; ++l) layers.push_back({8267, 768, "word", l});
  std::vector<ResponseShape> subjects;
  for (int s = 1; s <= 18; ++s) subjects.push_back({"sub-" + std::to_string(s), 2226, 1000, 1.5});
  Eigen::MatrixXi codes(8267, 6);
  for (Eigen::Index w = 0; w < codes.rows(); ++w) codes.row(w).setConstant(static_cast<int>(w % 2));
  const auto labels = make_label_table({"a", "b", "c", "d", "e", "f"}, codes);
  const auto timeline = uniform_timeline(8267, 2226, 1.5);
  CHECK(validate_dataset(layers, labels, timeline, subjects).ok());

  subjects[2].trs = 2225;
  const auto bad = validate_dataset(layers, labels, timeline, subjects);
  REQUIRE(!bad.ok());
  CHECK(bad.issues.front().find("TR count") != std::string::npos);

  subjects[2].trs = 2226;
  layers[4].rows = 8266;
  CHECK(!validate_dataset(layers, labels, timeline, subjects).ok());
}

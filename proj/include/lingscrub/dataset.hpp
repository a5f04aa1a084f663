#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// .fmat interchange: one JSON header line followed by little-endian f32
// values in row-major order.
// ---------------------------------------------------------------------------

struct MatrixHeader {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string kind;  // "word", "tr" or "response"
  int layer = 0;     // 0 for responses
};

using LoadedMatrix = std::variant<FeatureMatrix, ResponseMatrix>;

void save_matrix(const FeatureMatrix& m, const fs::path& path);
void save_matrix(const ResponseMatrix& m, const fs::path& path);

/// Reads only the header line.
MatrixHeader read_matrix_header(const fs::path& path);
LoadedMatrix load_matrix(const fs::path& path);
FeatureMatrix load_features(const fs::path& path);
/// Response files carry no subject id; the caller supplies it.
ResponseMatrix load_responses(const fs::path& path, const std::string& subject_id,
                              double tr_seconds = 1.5);

// ---------------------------------------------------------------------------
// Tabular inputs
// ---------------------------------------------------------------------------

/// TSV with header `word_index<TAB>task...`; class counts are max + 1.
LabelTable load_labels(const fs::path& path);
void save_labels(const LabelTable& labels, const fs::path& path);
/// Builds a table and checks that every class 0..k-1 occurs in every column.
LabelTable make_label_table(std::vector<std::string> task_names, Eigen::MatrixXi labels);

/// TSV `word_index<TAB>onset_seconds<TAB>sentence_index`, with header.
WordTimeline load_timeline(const fs::path& path);
void save_timeline(const WordTimeline& timeline, const fs::path& path);
/// Evenly spaced onsets covering the scan, one sentence per `words_per_sentence`.
WordTimeline uniform_timeline(std::size_t words, std::size_t trs, double tr_seconds,
                              std::size_t words_per_sentence = 10);

/// `voxel_index,parcel_name` CSV plus an optional ROI JSON. An empty path, an
/// empty file or `{}` selects the default language ROIs.
AtlasMap load_atlas(const fs::path& voxel_csv, const fs::path& roi_json = {});
AtlasMap make_atlas(std::vector<std::string> voxel_to_parcel,
                    std::map<std::string, std::vector<std::string>> roi_groups = {});
void save_atlas_csv(const AtlasMap& atlas, const fs::path& voxel_csv);

// ---------------------------------------------------------------------------
// Consistency checks
// ---------------------------------------------------------------------------

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

struct ResponseShape {
  std::string subject_id;
  std::size_t trs = 0;
  std::size_t voxels = 0;
  double tr_seconds = 1.5;
};

/// Shape-level check usable straight from file headers.
ValidationReport validate_dataset(const std::vector<MatrixHeader>& features,
                                  const LabelTable& labels, const WordTimeline& timeline,
                                  const std::vector<ResponseShape>& responses);

ValidationReport validate_dataset(const std::vector<FeatureMatrix>& features,
                                  const LabelTable& labels, const WordTimeline& timeline,
                                  const std::vector<ResponseMatrix>& responses);

}  // namespace lingscrub

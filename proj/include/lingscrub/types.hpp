#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lingscrub {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;
using LabelList = std::vector<int>;

/// Raised for malformed inputs and violated preconditions.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a solve or optimisation cannot produce a finite answer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class UnitKind { word, tr };

/// Words (or TRs) x embedding dimensions for one model layer.
struct FeatureMatrix {
  Matrix values;
  int layer_index = 1;
  UnitKind unit_kind = UnitKind::word;

  std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }
};

/// TRs x voxels recording for one subject.
struct ResponseMatrix {
  Matrix values;
  std::string subject_id;
  double tr_seconds = 1.5;

  std::size_t trs() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t voxels() const { return static_cast<std::size_t>(values.cols()); }
};

/// Dense per-word class labels, one column per probing task.
struct LabelTable {
  std::vector<std::string> task_names;
  Eigen::MatrixXi labels;  // words x tasks
  std::vector<int> class_counts;

  std::size_t words() const { return static_cast<std::size_t>(labels.rows()); }
  std::size_t tasks() const { return task_names.size(); }
  std::size_t task_column(const std::string& name) const;
  LabelList column(std::size_t task) const;
};

struct WordTimeline {
  std::vector<double> onset_seconds;
  std::vector<int> sentence_index;

  std::size_t size() const { return onset_seconds.size(); }
};

/// Voxel to parcel assignment plus named groups of parcels.
struct AtlasMap {
  std::vector<std::string> voxel_to_parcel;
  std::map<std::string, std::vector<std::string>> roi_groups;

  /// Voxel indices whose parcel belongs to the ROI. Throws for unknown ROIs.
  IndexList voxels_in_roi(const std::string& roi) const;
  /// Voxel indices assigned to a single parcel.
  IndexList voxels_in_parcel(const std::string& parcel) const;
};

/// Glasser-parcel language ROIs; AG, ATL, PTL, IFG, MFG, IFGOrb, PCC, dmPFC.
const std::map<std::string, std::vector<std::string>>& default_roi_groups();

/// Throws Error if any entry is NaN or infinite.
void require_finite(const Matrix& m, const std::string& what);

}  // namespace lingscrub

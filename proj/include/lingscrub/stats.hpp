#pragma once

#include <string>
#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub::stats {

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  int df = 0;
};

/// Two-tailed paired-sample t-test on a - b.
TTestResult paired_ttest_two_tailed(const Vector& a, const Vector& b);
TTestResult paired_ttest_two_tailed(const std::vector<double>& a, const std::vector<double>& b);

/// Benjamini-Hochberg step-up; mask in input order.
std::vector<bool> bh_fdr(const std::vector<double>& pvals, double q);

/// Per-layer drops in decoding accuracy and in brain alignment.
struct TrendInput {
  Vector delta_decode;
  Vector delta_align;
};

/// Pearson correlation of the two series across layers; NaN if either is
/// constant.
double layer_trend_correlation(const TrendInput& input);

/// Trend correlation per voxel. delta_align_by_voxel is layers x voxels.
Vector voxel_trend_map(const Vector& delta_decode, const Matrix& delta_align_by_voxel);

/// Mean of the defined values over the ROI's voxels.
double roi_aggregate(const Vector& per_voxel, const AtlasMap& atlas, const std::string& roi);
/// Same, for a single parcel (sub-ROI).
double parcel_aggregate(const Vector& per_voxel, const AtlasMap& atlas, const std::string& parcel);

/// Subject-mean alignment for one condition, subjects x layers.
struct ConditionScores {
  std::string condition;
  std::vector<std::string> subject_ids;
  std::vector<int> layers;
  Matrix subject_layer_mean;
};

struct SignificanceRow {
  std::string condition;
  int layer = 0;
  double mean_before = 0.0;
  double mean_after = 0.0;
  TTestResult test;
  bool degenerate = false;
  bool reject = false;  // after FDR over the whole family
};

struct SignificanceReport {
  double q = 0.05;
  std::vector<SignificanceRow> rows;

  /// Layers flagged for one condition.
  std::vector<int> flagged_layers(const std::string& condition) const;
};

/// Paired t-test per (condition, layer) across subjects, BH-FDR over all
/// tests in the report.
SignificanceReport significance_report(const ConditionScores& before, const std::vector<ConditionScores>& after, double q);

}  // namespace lingscrub::stats

#pragma once

#include <span>
#include <string>
#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub::encoding {

/// Half-open column range [begin, end) sharing one ridge penalty.
struct BandSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct EncoderModel {
  Matrix weights;  // features x voxels
  std::vector<double> lambda_per_band;
  std::vector<BandSpan> band_spans;
};

enum class ZscoreMode { per_split, train_statistics };

struct CvConfig {
  int folds = 4;
  std::vector<double> lambda_grid{0.1, 0.01, 0.001};
  double inner_validation_fraction = 0.25;
  std::vector<BandSpan> band_spans;  // empty: one band over all columns
  ZscoreMode zscore = ZscoreMode::per_split;
};

struct AlignmentResult {
  Vector per_voxel_r;  // NaN where undefined
  double per_subject_mean = 0.0;
  std::vector<double> chosen_lambda;  // per band
  std::vector<std::vector<double>> fold_lambdas;
  std::vector<double> fold_mean_r;
  std::size_t undefined_voxels = 0;
  std::string condition;
  std::string subject_id;
};

/// Sample Pearson correlation, accumulated in one streaming pass. NaN when
/// either input has zero variance.
double pearson(std::span<const double> y, std::span<const double> yhat);
double pearson(const Vector& y, const Vector& yhat);
/// Column-by-column Pearson correlation.
Vector pearson_columns(const Matrix& Y, const Matrix& Yhat);

/// Mean over the non-NaN entries; NaN when none are defined.
double nan_mean(const Vector& v);
std::size_t nan_count(const Vector& v);

/// Ridge solutions for many penalties from a single eigendecomposition of
/// X'X (or of XX' when there are more columns than rows).
class RidgeSolver {
 public:
  explicit RidgeSolver(const Matrix& X);

  Matrix weights(const Matrix& Y, double lambda) const;
  /// Predictions for `X_new` without materialising the weights.
  Matrix predict(const Matrix& X_new, const Matrix& Y, double lambda) const;
  double largest_eigenvalue() const { return eigenvalues_.size() ? eigenvalues_.maxCoeff() : 0.0; }
  double smallest_eigenvalue() const { return eigenvalues_.size() ? eigenvalues_.minCoeff() : 0.0; }

 private:
  Matrix X_;
  bool kernel_;
  Matrix basis_;  // eigenvectors of X'X (primal) or XX' (kernel)
  Vector eigenvalues_;
};

/// beta = (X'X + Lambda)^-1 X'Y with each band's lambda on its columns.
EncoderModel fit_ridge_encoder(const Matrix& X, const Matrix& Y, const std::vector<double>& lambda_per_band,
                               std::vector<BandSpan> band_spans = {});
EncoderModel fit_ridge_encoder(const FeatureMatrix& X, const ResponseMatrix& Y,
                               const std::vector<double>& lambda_per_band, std::vector<BandSpan> band_spans = {});

ResponseMatrix predict_responses(const EncoderModel& model, const FeatureMatrix& X);

/// Contiguous fold blocks over `n` TRs.
std::vector<IndexList> contiguous_folds(std::size_t n, int folds);

/// K-fold alignment with nested tail-validation for the penalty.
AlignmentResult cross_validated_alignment(const Matrix& X, const ResponseMatrix& Y, const CvConfig& cfg = {});

/// Same as above for several subjects sharing one feature matrix; the
/// decomposition work is shared, penalties are chosen per subject.
std::vector<AlignmentResult> cross_validated_alignment(const Matrix& X, std::span<const ResponseMatrix> subjects,
                                                       const CvConfig& cfg = {});

}  // namespace lingscrub::encoding

#pragma once

#include <string>
#include <vector>

#include "lingscrub/probing.hpp"
#include "lingscrub/types.hpp"

namespace lingscrub::removal {

/// How a label column becomes regressors: the class index itself, or one
/// indicator column per class.
enum class LabelEncoding { scalar, one_hot };

LabelEncoding parse_encoding(const std::string& name);
std::string to_string(LabelEncoding e);

/// Ridge map from property labels to representations.
///
/// The fit runs on mean-centred features; scalar designs are centred as well
/// (an unpenalised intercept), one-hot designs span the constant already.
/// Residuals keep the feature means, which carry no label information.
struct RemoverModel {
  Matrix theta;                     // regressor columns x dims
  Eigen::RowVectorXd label_mean;    // design column means removed before the fit (zero for one-hot)
  Eigen::RowVectorXd feature_mean;  // per-dim mean of the fitted features
  double lambda = 0.0;
  LabelEncoding encoding = LabelEncoding::scalar;
  std::vector<int> class_counts;  // per stacked task, used by one-hot designs
};

struct RemovalResult {
  RemoverModel remover;
  FeatureMatrix residuals;
};

/// Regressor matrix for the given label columns (words x tasks).
Matrix design_matrix(const Eigen::MatrixXi& label_columns, LabelEncoding encoding,
                     const std::vector<int>& class_counts);

/// theta = (T'T + lambda I)^-1 T'W. lambda = 0 gives the least-squares limit
/// and fails on a rank-deficient design.
RemoverModel fit_property_regressor(const LabelList& labels, const FeatureMatrix& W, double lambda,
                                    LabelEncoding encoding = LabelEncoding::scalar);

/// residuals = W - (T - label_mean) theta. The centred residuals
/// r = residuals - feature_mean satisfy T'r = lambda theta.
RemovalResult residualize(const FeatureMatrix& W, const LabelList& labels, const RemoverModel& model);

/// Stacked-design counterparts of fit_property_regressor and residualize, for
/// fitting on one set of rows and applying to another.
RemoverModel fit_multiple(const Eigen::MatrixXi& label_columns, const FeatureMatrix& W, double lambda,
                          LabelEncoding encoding = LabelEncoding::scalar);
RemovalResult residualize_multiple(const FeatureMatrix& W, const Eigen::MatrixXi& label_columns,
                                   const RemoverModel& model);

/// Joint fit of all label columns stacked into one design.
RemovalResult remove_multiple(const FeatureMatrix& W, const Eigen::MatrixXi& label_columns, double lambda,
                              LabelEncoding encoding = LabelEncoding::scalar);

/// Max-abs entry of T'r - lambda theta with r the centred residuals; zero up
/// to rounding for any fit.
double identity_residual(const Matrix& design, const Matrix& residuals, const RemoverModel& model);

// ---------------------------------------------------------------------------
// Iterative nullspace projection
// ---------------------------------------------------------------------------

struct InlpOptions {
  int iterations = 8;
  probing::ProbeOptions probe;
};

struct InlpResult {
  FeatureMatrix projected;
  Matrix projection;          // dims x dims, symmetric idempotent
  Matrix removed_directions;  // dims x rank, orthonormal
  std::vector<int> rank_after_iteration;
};

/// Repeatedly trains a linear classifier on the current projected features
/// and removes the span of its weight directions. The projection acts on
/// mean-centred features; projected = mean + (W - mean) P.
InlpResult inlp_remove(const FeatureMatrix& W, const LabelList& labels, const InlpOptions& opts = {});

}  // namespace lingscrub::removal

#include "lingscrub/removal.hpp"

#include <algorithm>
#include <cmath>

namespace lingscrub::removal {

LabelEncoding parse_encoding(const std::string& name) {
  if (name == "scalar") return LabelEncoding::scalar;
  if (name == "one_hot") return LabelEncoding::one_hot;
  throw Error("unknown label encoding " + name);
}

std::string to_string(LabelEncoding e) { return e == LabelEncoding::scalar ? "scalar" : "one_hot"; }

namespace {

std::vector<int> infer_class_counts(const Eigen::MatrixXi& labels) {
  std::vector<int> counts;
  for (Eigen::Index t = 0; t < labels.cols(); ++t) {
    if (labels.rows() > 0 && labels.col(t).minCoeff() < 0) throw Error("negative label");
    counts.push_back(labels.rows() == 0 ? 0 : labels.col(t).maxCoeff() + 1);
  }
  return counts;
}

Eigen::MatrixXi as_column(const LabelList& labels) {
  Eigen::MatrixXi m(static_cast<Eigen::Index>(labels.size()), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = labels[i];
  return m;
}

RemoverModel fit(const Eigen::MatrixXi& label_columns, const Matrix& W, double lambda, LabelEncoding encoding) {
  if (label_columns.cols() == 0) throw Error("no tasks");
  if (label_columns.rows() != W.rows()) throw Error("label count does not match feature rows");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("removal lambda must be finite and >= 0");
  require_finite(W, "removal features");

  RemoverModel model;
  model.lambda = lambda;
  model.encoding = encoding;
  model.class_counts = infer_class_counts(label_columns);
  const Matrix T = design_matrix(label_columns, encoding, model.class_counts);

  // Feature means carry no label information and are kept out of the fit.
  Matrix Tc = T;
  Matrix Wc = W;
  model.feature_mean = W.colwise().mean();
  model.label_mean = Eigen::RowVectorXd::Zero(T.cols());
  Wc.rowwise() -= model.feature_mean;
  if (encoding == LabelEncoding::scalar) {
    model.label_mean = T.colwise().mean();
    Tc.rowwise() -= model.label_mean;
  }

  Matrix gram = Tc.transpose() * Tc;
  gram.diagonal().array() += lambda;
  if (lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().maxCoeff();
    if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top)
      throw NumericalError("singular design, use lambda>0");
  }
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericalError("singular design, use lambda>0");
  model.theta = llt.solve(Tc.transpose() * Wc);
  return model;
}

RemovalResult apply(const FeatureMatrix& W, const Eigen::MatrixXi& label_columns, const RemoverModel& model) {
  if (label_columns.rows() != W.values.rows()) throw Error("label count does not match feature rows");
  const Matrix T = design_matrix(label_columns, model.encoding, model.class_counts);
  if (T.cols() != model.theta.rows() || W.values.cols() != model.theta.cols())
    throw Error("remover dimensions do not match features");
  RemovalResult out;
  out.remover = model;
  out.residuals = W;
  Matrix Tc = T;
  Tc.rowwise() -= model.label_mean;
  out.residuals.values = W.values - Tc * model.theta;
  return out;
}

}  // namespace

Matrix design_matrix(const Eigen::MatrixXi& label_columns, LabelEncoding encoding, const std::vector<int>& class_counts) {
  if (encoding == LabelEncoding::scalar) return label_columns.cast<double>();
  if (class_counts.size() != static_cast<std::size_t>(label_columns.cols())) throw Error("class counts per task required");
  Eigen::Index width = 0;
  for (int k : class_counts) width += k;
  Matrix T = Matrix::Zero(label_columns.rows(), width);
  Eigen::Index base = 0;
  for (Eigen::Index t = 0; t < label_columns.cols(); ++t) {
    const int k = class_counts[static_cast<std::size_t>(t)];
    for (Eigen::Index w = 0; w < label_columns.rows(); ++w) {
      const int v = label_columns(w, t);
      if (v < 0 || v >= k) throw Error("label outside the fitted class range");
      T(w, base + v) = 1.0;
    }
    base += k;
  }
  return T;
}

RemoverModel fit_property_regressor(const LabelList& labels, const FeatureMatrix& W, double lambda, LabelEncoding encoding) {
  return fit(as_column(labels), W.values, lambda, encoding);
}

RemovalResult residualize(const FeatureMatrix& W, const LabelList& labels, const RemoverModel& model) {
  return apply(W, as_column(labels), model);
}

RemoverModel fit_multiple(const Eigen::MatrixXi& label_columns, const FeatureMatrix& W, double lambda, LabelEncoding encoding) {
  return fit(label_columns, W.values, lambda, encoding);
}

RemovalResult residualize_multiple(const FeatureMatrix& W, const Eigen::MatrixXi& label_columns, const RemoverModel& model) {
  return apply(W, label_columns, model);
}

RemovalResult remove_multiple(const FeatureMatrix& W, const Eigen::MatrixXi& label_columns, double lambda, LabelEncoding encoding) {
  return apply(W, label_columns, fit(label_columns, W.values, lambda, encoding));
}

double identity_residual(const Matrix& design, const Matrix& residuals, const RemoverModel& model) {
  Matrix centred = residuals;
  centred.rowwise() -= model.feature_mean;
  return (design.transpose() * centred - model.lambda * model.theta).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

InlpResult inlp_remove(const FeatureMatrix& W, const LabelList& labels, const InlpOptions& opts) {
  if (opts.iterations < 1) throw Error("INLP needs at least one iteration");
  if (static_cast<std::size_t>(W.values.rows()) != labels.size()) throw Error("label count does not match feature rows");
  const Eigen::Index dims = W.values.cols();

  InlpResult out;
  out.removed_directions = Matrix(dims, 0);
  out.projection = Matrix::Identity(dims, dims);
  const Eigen::RowVectorXd mean = W.values.colwise().mean();
  Matrix Wc = W.values;
  Wc.rowwise() -= mean;
  for (int it = 0; it < opts.iterations; ++it) {
    const Matrix current = Wc * out.projection;
    probing::ProbeModel probe;
    try {
      probe = probing::train_probe(current, labels, opts.probe);
    } catch (const NumericalError& e) {
      throw NumericalError("INLP classifier failed at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!probe.weights.allFinite())
      throw NumericalError("INLP classifier failed at iteration " + std::to_string(it));

    // Softmax weights sum to zero across classes, so they span at most k-1
    // directions; keep the numerically nonzero part of that span.
    Eigen::JacobiSVD<Matrix> svd(probe.weights, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    Eigen::Index keep = 0;
    while (keep < s.size() && s(keep) > 1e-10 * std::max(1.0, s(0))) ++keep;

    if (keep > 0) {
      Matrix stacked(dims, out.removed_directions.cols() + keep);
      stacked << out.removed_directions, svd.matrixU().leftCols(keep);
      // Re-orthonormalise the accumulated basis.
      Eigen::HouseholderQR<Matrix> qr(stacked);
      out.removed_directions = qr.householderQ() * Matrix::Identity(dims, stacked.cols());
      out.projection = Matrix::Identity(dims, dims) - out.removed_directions * out.removed_directions.transpose();
    }
    out.rank_after_iteration.push_back(static_cast<int>(dims - out.removed_directions.cols()));
  }
  out.projected = W;
  out.projected.values = Wc * out.projection;
  out.projected.values.rowwise() += mean;
  return out;
}

}  // namespace lingscrub::removal

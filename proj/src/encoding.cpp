#include "lingscrub/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "lingscrub/probing.hpp"
#include "lingscrub/temporal.hpp"

namespace lingscrub::encoding {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<BandSpan> normalise_bands(std::vector<BandSpan> spans, std::size_t cols) {
  if (spans.empty()) return {{0, cols}};
  std::sort(spans.begin(), spans.end(), [](const BandSpan& a, const BandSpan& b) { return a.begin < b.begin; });
  std::size_t at = 0;
  for (const auto& s : spans) {
    if (s.begin != at || s.end <= s.begin) throw Error("band spans must partition the feature columns");
    at = s.end;
  }
  if (at != cols) throw Error("band spans must partition the feature columns");
  return spans;
}

// Column scaling that turns a banded problem into ridge with unit penalty.
Vector band_scale(const std::vector<BandSpan>& spans, const std::vector<double>& lambdas, std::size_t cols) {
  Vector scale(static_cast<Eigen::Index>(cols));
  for (std::size_t b = 0; b < spans.size(); ++b)
    for (std::size_t c = spans[b].begin; c < spans[b].end; ++c) scale(static_cast<Eigen::Index>(c)) = 1.0 / std::sqrt(lambdas[b]);
  return scale;
}

// Applies z-scoring to a train/test pair according to the configured mode.
std::pair<Matrix, Matrix> standardise(const Matrix& train, const Matrix& test, ZscoreMode mode) {
  if (mode == ZscoreMode::per_split)
    return {temporal::zscore_columns(train).values, temporal::zscore_columns(test).values};
  const Eigen::RowVectorXd mean = train.colwise().mean();
  Matrix a = train.rowwise() - mean;
  Eigen::RowVectorXd sd = (a.colwise().squaredNorm() / static_cast<double>(train.rows())).cwiseSqrt();
  for (Eigen::Index c = 0; c < sd.size(); ++c)
    if (sd(c) <= 1e-12) sd(c) = std::numeric_limits<double>::infinity();
  Matrix b = test.rowwise() - mean;
  a.array().rowwise() /= sd.array();
  b.array().rowwise() /= sd.array();
  return {a, b};
}

// Candidate penalty vectors: the grid for one band, its Cartesian power otherwise.
std::vector<std::vector<double>> candidates(const std::vector<double>& grid, std::size_t bands) {
  std::vector<std::vector<double>> out{{}};
  for (std::size_t b = 0; b < bands; ++b) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : out)
      for (double l : grid) {
        auto v = prefix;
        v.push_back(l);
        next.push_back(std::move(v));
      }
    out = std::move(next);
  }
  return out;
}

// Predictions on `X_test` for every candidate, for a stacked response block.
class CandidatePredictor {
 public:
  CandidatePredictor(const Matrix& X_train, const std::vector<BandSpan>& spans, const std::vector<std::vector<double>>& cands)
      : spans_(spans), cands_(cands) {
    if (spans.size() == 1) {
      solvers_.emplace_back(X_train);
    } else {
      for (const auto& c : cands) {
        const Vector s = band_scale(spans, c, static_cast<std::size_t>(X_train.cols()));
        solvers_.emplace_back(X_train * s.asDiagonal());
      }
    }
  }

  Matrix predict(std::size_t cand, const Matrix& X_test, const Matrix& Y) const {
    if (spans_.size() == 1) return solvers_[0].predict(X_test, Y, cands_[cand][0]);
    const Vector s = band_scale(spans_, cands_[cand], static_cast<std::size_t>(X_test.cols()));
    return solvers_[cand].predict(X_test * s.asDiagonal(), Y, 1.0);
  }

 private:
  std::vector<BandSpan> spans_;
  std::vector<std::vector<double>> cands_;
  std::vector<RidgeSolver> solvers_;
};

}  // namespace

// ---------------------------------------------------------------------------

double pearson(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw Error("pearson: length mismatch");
  if (y.size() < 2) throw Error("pearson: needs at least 2 samples");
  double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double n = static_cast<double>(i + 1);
    const double dx = y[i] - mx;
    const double dy = yhat[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (y[i] - mx);
    syy += dy * (yhat[i] - my);
    sxy += dx * (yhat[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return kNaN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(const Vector& y, const Vector& yhat) {
  return pearson(std::span<const double>(y.data(), static_cast<std::size_t>(y.size())),
                 std::span<const double>(yhat.data(), static_cast<std::size_t>(yhat.size())));
}

Vector pearson_columns(const Matrix& Y, const Matrix& Yhat) {
  if (Y.rows() != Yhat.rows() || Y.cols() != Yhat.cols()) throw Error("pearson: shape mismatch");
  if (Y.rows() < 2) throw Error("pearson: needs at least 2 samples");
  const Matrix a = Y.rowwise() - Y.colwise().mean();
  const Matrix b = Yhat.rowwise() - Yhat.colwise().mean();
  Vector r(Y.cols());
  for (Eigen::Index c = 0; c < Y.cols(); ++c) {
    const double saa = a.col(c).squaredNorm();
    const double sbb = b.col(c).squaredNorm();
    r(c) = (saa > 0.0 && sbb > 0.0) ? std::clamp(a.col(c).dot(b.col(c)) / std::sqrt(saa * sbb), -1.0, 1.0) : kNaN;
  }
  return r;
}

double nan_mean(const Vector& v) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isnan(v(i))) {
      sum += v(i);
      ++n;
    }
  return n ? sum / static_cast<double>(n) : kNaN;
}

std::size_t nan_count(const Vector& v) {
  return static_cast<std::size_t>(v.array().isNaN().count());
}

// ---------------------------------------------------------------------------

RidgeSolver::RidgeSolver(const Matrix& X) : X_(X), kernel_(X.cols() > X.rows()) {
  const Matrix gram = kernel_ ? Matrix(X * X.transpose()) : Matrix(X.transpose() * X);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  if (eig.info() != Eigen::Success) throw NumericalError("ridge: eigendecomposition failed");
  basis_ = eig.eigenvectors();
  eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
}

Matrix RidgeSolver::weights(const Matrix& Y, double lambda) const {
  if (Y.rows() != X_.rows()) throw Error("ridge: response rows do not match features");
  const Vector inv = (eigenvalues_.array() + lambda).inverse();
  if (kernel_) return X_.transpose() * (basis_ * (inv.asDiagonal() * (basis_.transpose() * Y)));
  return basis_ * (inv.asDiagonal() * (basis_.transpose() * (X_.transpose() * Y)));
}

Matrix RidgeSolver::predict(const Matrix& X_new, const Matrix& Y, double lambda) const {
  if (X_new.cols() != X_.cols()) throw Error("ridge: feature dimension mismatch");
  const Vector inv = (eigenvalues_.array() + lambda).inverse();
  if (kernel_) return (X_new * X_.transpose()) * (basis_ * (inv.asDiagonal() * (basis_.transpose() * Y)));
  return (X_new * basis_) * (inv.asDiagonal() * (basis_.transpose() * (X_.transpose() * Y)));
}

EncoderModel fit_ridge_encoder(const Matrix& X, const Matrix& Y, const std::vector<double>& lambda_per_band,
                               std::vector<BandSpan> band_spans) {
  if (X.rows() != Y.rows()) throw Error("encoder: feature rows do not match TRs");
  EncoderModel model;
  model.band_spans = normalise_bands(std::move(band_spans), static_cast<std::size_t>(X.cols()));
  if (lambda_per_band.size() != model.band_spans.size()) throw Error("encoder: one lambda per band required");
  for (double l : lambda_per_band)
    if (!(l > 0.0)) throw Error("encoder: lambdas must be positive");
  model.lambda_per_band = lambda_per_band;

  const Vector scale = band_scale(model.band_spans, lambda_per_band, static_cast<std::size_t>(X.cols()));
  RidgeSolver solver(X * scale.asDiagonal());
  // Scaled system has unit penalty: eigenvalues of the regularised Gram are s + 1.
  const double cond = (solver.largest_eigenvalue() + 1.0) / (solver.smallest_eigenvalue() + 1.0);
  if (!std::isfinite(cond) || cond > 1e15)
    throw NumericalError("encoder: system not numerically SPD (condition estimate " + std::to_string(cond) + ")");
  model.weights = scale.asDiagonal() * solver.weights(Y, 1.0);
  return model;
}

EncoderModel fit_ridge_encoder(const FeatureMatrix& X, const ResponseMatrix& Y, const std::vector<double>& lambda_per_band,
                               std::vector<BandSpan> band_spans) {
  return fit_ridge_encoder(X.values, Y.values, lambda_per_band, std::move(band_spans));
}

ResponseMatrix predict_responses(const EncoderModel& model, const FeatureMatrix& X) {
  if (X.values.cols() != model.weights.rows()) throw Error("encoder: feature dimension mismatch");
  ResponseMatrix out;
  out.values = X.values * model.weights;
  return out;
}

std::vector<IndexList> contiguous_folds(std::size_t n, int folds) {
  if (folds < 2) throw Error("cross-validation needs at least 2 folds");
  std::vector<IndexList> out(static_cast<std::size_t>(folds));
  for (int f = 0; f < folds; ++f) {
    const std::size_t begin = n * static_cast<std::size_t>(f) / static_cast<std::size_t>(folds);
    const std::size_t end = n * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(folds);
    if (end - begin < 2) throw Error("fold " + std::to_string(f) + " has fewer than 2 TRs");
    for (std::size_t i = begin; i < end; ++i) out[static_cast<std::size_t>(f)].push_back(i);
  }
  return out;
}

std::vector<AlignmentResult> cross_validated_alignment(const Matrix& X, std::span<const ResponseMatrix> subjects,
                                                       const CvConfig& cfg) {
  if (subjects.empty()) return {};
  if (cfg.lambda_grid.empty()) throw Error("lambda grid is empty");
  for (double l : cfg.lambda_grid)
    if (!(l > 0.0)) throw Error("lambda grid entries must be positive");
  if (!(cfg.inner_validation_fraction > 0.0 && cfg.inner_validation_fraction < 1.0))
    throw Error("inner validation fraction must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(X.rows());
  std::vector<Eigen::Index> offsets{0};
  for (const auto& s : subjects) {
    if (s.trs() != n) throw Error("TR count of subject " + s.subject_id + " does not match features");
    offsets.push_back(offsets.back() + s.values.cols());
  }
  Matrix Y_all(static_cast<Eigen::Index>(n), offsets.back());
  for (std::size_t s = 0; s < subjects.size(); ++s) Y_all.middleCols(offsets[s], subjects[s].values.cols()) = subjects[s].values;

  const auto spans = normalise_bands(cfg.band_spans, static_cast<std::size_t>(X.cols()));
  const auto cands = candidates(cfg.lambda_grid, spans.size());
  const auto folds = contiguous_folds(n, cfg.folds);
  const std::size_t S = subjects.size();

  std::vector<Matrix> fold_r(S);  // voxels x folds
  std::vector<std::vector<std::vector<double>>> fold_lambdas(S);
  for (std::size_t s = 0; s < S; ++s) fold_r[s] = Matrix(subjects[s].values.cols(), cfg.folds);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    IndexList train;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    const auto n_val = static_cast<std::size_t>(std::ceil(cfg.inner_validation_fraction * static_cast<double>(train.size())));
    if (n_val < 2 || train.size() - n_val < 2) throw Error("too few TRs for inner validation");
    const IndexList inner_train(train.begin(), train.end() - static_cast<std::ptrdiff_t>(n_val));
    const IndexList inner_val(train.end() - static_cast<std::ptrdiff_t>(n_val), train.end());

    // Inner loop: score every candidate penalty on the tail of the training set.
    std::vector<std::size_t> best(S, 0);
    if (cands.size() > 1) {
      auto [Xi, Xv] = standardise(probing::take_rows(X, inner_train), probing::take_rows(X, inner_val), cfg.zscore);
      auto [Yi, Yv] = standardise(probing::take_rows(Y_all, inner_train), probing::take_rows(Y_all, inner_val), cfg.zscore);
      CandidatePredictor inner(Xi, spans, cands);
      std::vector<double> best_score(S, -std::numeric_limits<double>::infinity());
      for (std::size_t c = 0; c < cands.size(); ++c) {
        const Vector r = pearson_columns(Yv, inner.predict(c, Xv, Yi));
        for (std::size_t s = 0; s < S; ++s) {
          double score = nan_mean(r.segment(offsets[s], offsets[s + 1] - offsets[s]));
          if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
          if (score > best_score[s]) {
            best_score[s] = score;
            best[s] = c;
          }
        }
      }
    }

    auto [Xtr, Xte] = standardise(probing::take_rows(X, train), probing::take_rows(X, folds[f]), cfg.zscore);
    auto [Ytr, Yte] = standardise(probing::take_rows(Y_all, train), probing::take_rows(Y_all, folds[f]), cfg.zscore);
    CandidatePredictor outer(Xtr, spans, cands);
    std::map<std::size_t, Matrix> by_candidate;
    for (std::size_t s = 0; s < S; ++s) {
      const Eigen::Index width = offsets[s + 1] - offsets[s];
      auto it = by_candidate.find(best[s]);
      if (it == by_candidate.end()) it = by_candidate.emplace(best[s], outer.predict(best[s], Xte, Ytr)).first;
      fold_r[s].col(static_cast<Eigen::Index>(f)) =
          pearson_columns(Yte.middleCols(offsets[s], width), it->second.middleCols(offsets[s], width));
      fold_lambdas[s].push_back(cands[best[s]]);
    }
  }

  std::vector<AlignmentResult> out(S);
  for (std::size_t s = 0; s < S; ++s) {
    auto& res = out[s];
    res.subject_id = subjects[s].subject_id;
    res.per_voxel_r = Vector(fold_r[s].rows());
    for (Eigen::Index v = 0; v < fold_r[s].rows(); ++v) res.per_voxel_r(v) = nan_mean(fold_r[s].row(v).transpose());
    res.undefined_voxels = nan_count(res.per_voxel_r);
    res.per_subject_mean = nan_mean(res.per_voxel_r);
    for (Eigen::Index f = 0; f < fold_r[s].cols(); ++f) res.fold_mean_r.push_back(nan_mean(fold_r[s].col(f)));
    res.fold_lambdas = fold_lambdas[s];
    // Reported penalty: the one chosen in most folds, larger on ties.
    std::map<std::vector<double>, int> votes;
    for (const auto& l : fold_lambdas[s]) ++votes[l];
    int top = -1;
    for (const auto& [l, count] : votes)
      if (count >= top) {
        top = count;
        res.chosen_lambda = l;
      }
  }
  return out;
}

AlignmentResult cross_validated_alignment(const Matrix& X, const ResponseMatrix& Y, const CvConfig& cfg) {
  return cross_validated_alignment(X, std::span<const ResponseMatrix>(&Y, 1), cfg).front();
}

}  // namespace lingscrub::encoding

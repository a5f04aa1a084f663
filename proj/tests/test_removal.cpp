#include <doctest.h>

#include "lingscrub/removal.hpp"
#include "lingscrub/rng.hpp"
#include "lingscrub/synth.hpp"

using namespace lingscrub;
using removal::LabelEncoding;

namespace {

FeatureMatrix features(const Matrix& m) {
  FeatureMatrix f;
  f.values = m;
  return f;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

LabelList random_labels(Rng& rng, std::size_t n, int k) {
  LabelList y(n);
  for (auto& v : y) v = static_cast<int>(rng.index(static_cast<std::uint64_t>(k)));
  return y;
}

Matrix column(const LabelList& y) {
  Matrix T(static_cast<Eigen::Index>(y.size()), 1);
  for (std::size_t i = 0; i < y.size(); ++i) T(static_cast<Eigen::Index>(i), 0) = y[i];
  return T;
}

}  // namespace

// Labels {1, 0} centre to T = [0.5, -0.5]; W = [2, -2] is already centred.
// theta = T'W / (T'T + lambda) = 2 / (0.5 + lambda).
TEST_CASE("two-word example, least squares") {
  const auto W = features((Matrix(2, 1) << 2, -2).finished());
  const auto model = removal::fit_property_regressor({1, 0}, W, 0.0);
  CHECK(model.theta(0, 0) == doctest::Approx(4.0));
  const auto r = removal::residualize(W, {1, 0}, model);
  CHECK(r.residuals.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two-word example, ridge") {
  const auto W = features((Matrix(2, 1) << 2, -2).finished());
  const auto model = removal::fit_property_regressor({1, 0}, W, 1.5);
  CHECK(model.theta(0, 0) == doctest::Approx(1.0));
  const auto r = removal::residualize(W, {1, 0}, model);
  CHECK(r.residuals.values(0, 0) == doctest::Approx(1.5));
  CHECK(r.residuals.values(1, 0) == doctest::Approx(-1.5));
  const Matrix Tc = (Matrix(2, 1) << 0.5, -0.5).finished();
  CHECK(removal::identity_residual(Tc, r.residuals.values, model) < 1e-12);
}

TEST_CASE("one-hot design reproduces the hand example exactly") {
  // One-hot columns are not centred: T'T = I and T'W = [-2, 2], so lambda = 1
  // gives theta = [-1, 1] and residuals [1, -1].
  const auto W = features((Matrix(2, 1) << 2, -2).finished());
  const auto model = removal::fit_property_regressor({1, 0}, W, 1.0, LabelEncoding::one_hot);
  CHECK(model.theta(0, 0) == doctest::Approx(-1.0));
  CHECK(model.theta(1, 0) == doctest::Approx(1.0));
  const auto r = removal::residualize(W, {1, 0}, model);
  CHECK(r.residuals.values(0, 0) == doctest::Approx(1.0));
  CHECK(r.residuals.values(1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("singular design without penalty") {
  const auto W = features(Matrix::Ones(3, 2));
  CHECK_THROWS_AS(removal::fit_property_regressor({1, 1, 1}, W, 0.0), NumericalError);
  CHECK_NOTHROW(removal::fit_property_regressor({1, 1, 1}, W, 0.1));
}

TEST_CASE("zero feature column gives zero theta column") {
  Rng rng(3);
  Matrix m = random_matrix(rng, 30, 3);
  m.col(1).setZero();
  const auto model = removal::fit_property_regressor(random_labels(rng, 30, 3), features(m), 0.1);
  CHECK(model.theta.col(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("least squares residuals are orthogonal and idempotent") {
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const auto y = random_labels(rng, 80, 3);
    const auto W = features(random_matrix(rng, 80, 6));
    const auto first = removal::residualize(W, y, removal::fit_property_regressor(y, W, 0.0));
    Matrix Tc = column(y);
    Tc.array() -= Tc.mean();
    Matrix centred = first.residuals.values;
    centred.rowwise() -= first.residuals.values.colwise().mean();
    CHECK((Tc.transpose() * centred).cwiseAbs().maxCoeff() < 1e-8);
    const auto refit = removal::fit_property_regressor(y, first.residuals, 0.0);
    CHECK(refit.theta.norm() <= 1e-8 * W.values.norm());
  }
}

TEST_CASE("residuals keep the feature means") {
  Rng rng(5);
  Matrix m = random_matrix(rng, 50, 4);
  m.array() += 3.0;
  const auto y = random_labels(rng, 50, 2);
  const auto r = removal::residualize(features(m), y, removal::fit_property_regressor(y, features(m), 0.5));
  CHECK((r.residuals.values.colwise().mean() - m.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ridge residual matches the OLS oracle at lambda 0") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const auto y = random_labels(rng, 60, 3);
    const Matrix m = random_matrix(rng, 60, 5);
    const auto r = removal::residualize(features(m), y, removal::fit_property_regressor(y, features(m), 0.0));
    CHECK((r.residuals.values - synth::ols_residual_oracle(m, y)).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("stacked removal") {
  Rng rng(23);
  const Matrix m = random_matrix(rng, 40, 4);
  const auto y = random_labels(rng, 40, 3);
  Eigen::MatrixXi cols(40, 2);
  for (int i = 0; i < 40; ++i) cols(i, 0) = cols(i, 1) = y[static_cast<std::size_t>(i)];

  SUBCASE("duplicate columns match single-column removal with half the penalty") {
    const double lambda = 0.8;
    const auto joint = removal::remove_multiple(features(m), cols, lambda);
    const auto single = removal::residualize(features(m), y, removal::fit_property_regressor(y, features(m), lambda / 2));
    CHECK((joint.residuals.values - single.residuals.values).cwiseAbs().maxCoeff() < 1e-10);
    Matrix T = removal::design_matrix(cols, removal::LabelEncoding::scalar, {});
    T.rowwise() -= T.colwise().mean();
    CHECK(removal::identity_residual(T, joint.residuals.values, joint.remover) < 1e-10);
  }
  SUBCASE("no tasks") {
    CHECK_THROWS_AS(removal::remove_multiple(features(m), Eigen::MatrixXi(40, 0), 1.0), Error);
  }
}

TEST_CASE("fit on some rows, apply to others") {
  Rng rng(29);
  const Matrix m = random_matrix(rng, 30, 3);
  const auto y = random_labels(rng, 30, 2);
  Eigen::MatrixXi cols(30, 1);
  for (int i = 0; i < 30; ++i) cols(i, 0) = y[static_cast<std::size_t>(i)];
  const auto model = removal::fit_multiple(cols, features(m), 0.2);
  const auto a = removal::residualize_multiple(features(m), cols, model);
  const auto b = removal::residualize(features(m), y, removal::fit_property_regressor(y, features(m), 0.2));
  CHECK((a.residuals.values - b.residuals.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("INLP projection") {
  synth::SynthConfig cfg;
  cfg.n_words = 600;
  cfg.dims = 16;
  cfg.n_layers = 1;
  cfg.n_subjects = 1;
  cfg.trs = 60;
  cfg.voxels = 10;
  const auto data = synth::generate_dataset(cfg);
  const auto y = data.labels.column(0);
  removal::InlpOptions opts;
  opts.iterations = 4;
  const auto res = removal::inlp_remove(data.features[0], y, opts);
  const Matrix& P = res.projection;
  CHECK((P * P - P).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((P - P.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
  int previous = static_cast<int>(cfg.dims);
  for (int rank : res.rank_after_iteration) {
    CHECK(previous - rank <= data.labels.class_counts[0] - 1);
    previous = rank;
  }
  CHECK_THROWS_AS(removal::inlp_remove(data.features[0], y, {0, {}}), Error);
}

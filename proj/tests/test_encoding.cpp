#include <doctest.h>

#include <cmath>

#include "lingscrub/encoding.hpp"
#include "lingscrub/rng.hpp"
#include "lingscrub/synth.hpp"

using namespace lingscrub;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

ResponseMatrix responses(const Matrix& m) {
  ResponseMatrix r;
  r.values = m;
  r.subject_id = "s1";
  return r;
}

}  // namespace

TEST_CASE("pearson") {
  CHECK(encoding::pearson(Vector{{1, 2, 3}}, Vector{{1, 2, 3}}) == doctest::Approx(1.0));
  CHECK(encoding::pearson(Vector{{1, 2, 3}}, Vector{{3, 2, 1}}) == doctest::Approx(-1.0));
  CHECK(encoding::pearson(Vector{{1, 2, 3, 4}}, Vector{{1, 3, 2, 4}}) == doctest::Approx(0.8));
  CHECK(std::isnan(encoding::pearson(Vector{{1, 1, 1}}, Vector{{1, 2, 3}})));

  Rng rng(2);
  const Vector y = gaussian(rng, 40, 1).col(0), yhat = gaussian(rng, 40, 1).col(0);
  const double r = encoding::pearson(y, yhat);
  CHECK(encoding::pearson(Vector((3.0 * y).array() + 1.0), yhat) == doctest::Approx(r));
  CHECK(encoding::pearson(Vector(-y), yhat) == doctest::Approx(-r));
  std::vector<double> a(y.data(), y.data() + y.size()), b(yhat.data(), yhat.data() + yhat.size());
  CHECK(std::abs(r - synth::naive_pearson_oracle(a, b)) <= 1e-12);
}

TEST_CASE("ridge encoder") {
  SUBCASE("identity design") {
    const auto m = encoding::fit_ridge_encoder(Matrix::Identity(3, 3), Matrix{{1}, {2}, {3}}, {1.0});
    CHECK(m.weights(0, 0) == doctest::Approx(0.5));
    CHECK(m.weights(1, 0) == doctest::Approx(1.0));
    CHECK(m.weights(2, 0) == doctest::Approx(1.5));
  }
  Rng rng(4);
  const Matrix X = gaussian(rng, 120, 10);
  const Matrix B = gaussian(rng, 10, 3);
  const Matrix Y = X * B;
  SUBCASE("bands with equal penalties") {
    const auto one = encoding::fit_ridge_encoder(X, Y, {0.7});
    const auto two = encoding::fit_ridge_encoder(X, Y, {0.7, 0.7}, {{0, 4}, {4, 10}});
    CHECK((one.weights - two.weights).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("planted weights") {
    const auto m = encoding::fit_ridge_encoder(X, Y, {1e-6});
    CHECK((m.weights - B).norm() / B.norm() < 1e-3);
  }
  SUBCASE("shrinkage") {
    double last = 1e300;
    for (double lambda : {0.01, 0.1, 1.0, 10.0, 100.0}) {
      const double norm = encoding::fit_ridge_encoder(X, Y, {lambda}).weights.norm();
      CHECK(norm <= last);
      last = norm;
    }
  }
  SUBCASE("solver matches the direct fit") {
    const encoding::RidgeSolver solver(X);
    const auto direct = encoding::fit_ridge_encoder(X, Y, {2.5});
    CHECK((solver.weights(Y, 2.5) - direct.weights).cwiseAbs().maxCoeff() < 1e-9);
    const encoding::RidgeSolver wide(X.leftCols(8).transpose());
    const Matrix Yw = gaussian(rng, 8, 2);
    const auto wide_direct = encoding::fit_ridge_encoder(Matrix(X.leftCols(8).transpose()), Yw, {0.3});
    CHECK((wide.weights(Yw, 0.3) - wide_direct.weights).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("predictions") {
  encoding::EncoderModel m;
  m.weights = Matrix::Random(4, 3);
  FeatureMatrix zero;
  zero.values = Matrix::Zero(5, 4);
  CHECK(encoding::predict_responses(m, zero).values.cwiseAbs().maxCoeff() == 0.0);
  FeatureMatrix dup;
  dup.values = Matrix::Random(2, 4);
  dup.values.row(1) = dup.values.row(0);
  const auto p = encoding::predict_responses(m, dup).values;
  CHECK(p.row(0) == p.row(1));
  FeatureMatrix wrong;
  wrong.values = Matrix::Zero(2, 5);
  CHECK_THROWS_AS(encoding::predict_responses(m, wrong), Error);
}

TEST_CASE("contiguous folds") {
  const auto folds = encoding::contiguous_folds(10, 4);
  REQUIRE(folds.size() == 4);
  std::size_t next = 0;
  for (const auto& f : folds)
    for (auto i : f) CHECK(i == next++);
  CHECK(next == 10);
  CHECK_THROWS_AS(encoding::contiguous_folds(5, 4), Error);
}

TEST_CASE("cross-validated alignment") {
  Rng rng(9);
  const Matrix X = gaussian(rng, 2000, 20);
  const Matrix B = gaussian(rng, 20, 100);
  const Matrix clean = X * B;
  Matrix noisy = clean;
  for (Eigen::Index v = 0; v < noisy.cols(); ++v) {
    const double sd = std::sqrt((clean.col(v).array() - clean.col(v).mean()).square().mean());
    for (Eigen::Index t = 0; t < noisy.rows(); ++t) noisy(t, v) += 0.1 * sd * rng.normal();
  }
  const auto planted = encoding::cross_validated_alignment(X, responses(noisy));
  CHECK(planted.per_subject_mean > 0.9);

  const auto null = encoding::cross_validated_alignment(X, responses(gaussian(rng, 2000, 100)));
  CHECK(std::abs(null.per_subject_mean) < 0.05);

  const auto again = encoding::cross_validated_alignment(X, responses(noisy));
  CHECK(again.per_voxel_r == planted.per_voxel_r);
}

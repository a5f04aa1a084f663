#include <doctest.h>

#include <cmath>

#include "lingscrub/rng.hpp"
#include "lingscrub/stats.hpp"
#include "lingscrub/synth.hpp"

using namespace lingscrub;

TEST_CASE("paired t-test") {
  SUBCASE("symmetric differences") {
    const auto r = stats::paired_ttest_two_tailed(std::vector<double>{1, 3, 5}, std::vector<double>{2, 3, 4});
    CHECK(r.t == doctest::Approx(0.0));
    CHECK(r.p == doctest::Approx(1.0));
  }
  SUBCASE("worked example") {
    // d = [1,2,3]: mean 2, sd 1, t = 2 / (1/sqrt 3) = 3.4641.
    const auto r = stats::paired_ttest_two_tailed(std::vector<double>{1, 2, 4}, std::vector<double>{0, 0, 1});
    CHECK(r.t == doctest::Approx(3.4641).epsilon(1e-4));
    CHECK(r.df == 2);
    CHECK(r.p == doctest::Approx(0.0742).epsilon(1e-3));
  }
  SUBCASE("constant differences") {
    CHECK_THROWS_AS(stats::paired_ttest_two_tailed(std::vector<double>{3, 4, 5}, std::vector<double>{1, 2, 3}), Error);
  }
  SUBCASE("antisymmetry") {
    const std::vector<double> a{0.3, 0.1, 0.7, 0.2}, b{0.1, 0.2, 0.3, 0.05};
    const auto ab = stats::paired_ttest_two_tailed(a, b), ba = stats::paired_ttest_two_tailed(b, a);
    CHECK(ab.t == doctest::Approx(-ba.t));
    CHECK(ab.p == doctest::Approx(ba.p));
  }
}

TEST_CASE("Benjamini-Hochberg") {
  const std::vector<double> p{0.001, 0.008, 0.039, 0.041, 0.042, 0.06};
  CHECK(stats::bh_fdr(p, 0.05) == std::vector<bool>{true, true, false, false, false, false});
  CHECK(stats::bh_fdr({1, 1, 1}, 0.05) == std::vector<bool>{false, false, false});
  CHECK(stats::bh_fdr({0, 0, 0}, 0.05) == std::vector<bool>{true, true, true});

  // Input order does not matter, and results match the definition.
  Rng rng(7);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> ps(1 + rng.index(30));
    for (auto& v : ps) v = rng.uniform() * (rng.uniform() < 0.3 ? 0.01 : 1.0);
    CHECK(stats::bh_fdr(ps, 0.1) == synth::naive_bh_oracle(ps, 0.1));
  }
}

TEST_CASE("layer trend correlation") {
  Vector d(5);
  d << 1, 3, 2, 5, 4;
  CHECK(stats::layer_trend_correlation({d, d}) == doctest::Approx(1.0));
  CHECK(stats::layer_trend_correlation({d, -d}) == doctest::Approx(-1.0));
  Vector a(5);
  a << 0.2, 0.1, 0.5, 0.3, 0.3;
  const double r = stats::layer_trend_correlation({d, a});
  CHECK(stats::layer_trend_correlation({d.array() + 4.0, 3.0 * a}) == doctest::Approx(r));
  CHECK(std::isnan(stats::layer_trend_correlation({d, Vector::Constant(5, 2.0)})));
}

TEST_CASE("voxel trend map equals per-voxel correlation") {
  Rng rng(13);
  Vector decode(6);
  Matrix align(6, 4);
  for (int i = 0; i < 6; ++i) {
    decode(i) = rng.normal();
    for (int v = 0; v < 4; ++v) align(i, v) = rng.normal();
  }
  const Vector map = stats::voxel_trend_map(decode, align);
  for (int v = 0; v < 4; ++v) CHECK(map(v) == doctest::Approx(stats::layer_trend_correlation({decode, align.col(v)})));
}

TEST_CASE("ROI aggregation") {
  const AtlasMap atlas = [] {
    AtlasMap a;
    a.voxel_to_parcel = {"PFm", "44", "PGs"};
    a.roi_groups = {{"AG", {"PFm", "PGs"}}, {"IFG", {"44"}}};
    return a;
  }();
  Vector v(3);
  v << 1, 2, 3;
  CHECK(stats::roi_aggregate(v, atlas, "AG") == doctest::Approx(2.0));
  CHECK(stats::parcel_aggregate(v, atlas, "44") == doctest::Approx(2.0));
  v(0) = std::nan("");
  CHECK(stats::roi_aggregate(v, atlas, "AG") == doctest::Approx(3.0));
  v(1) = std::nan("");
  CHECK_THROWS_AS(stats::roi_aggregate(v, atlas, "IFG"), Error);
  CHECK(stats::roi_aggregate(Vector::Constant(3, 0.25), atlas, "AG") == doctest::Approx(0.25));
}

TEST_CASE("significance report") {
  stats::ConditionScores before{"before", {"s1", "s2", "s3", "s4"}, {1, 2}, Matrix(4, 2)};
  before.subject_layer_mean << 0.30, 0.32, 0.28, 0.31, 0.33, 0.35, 0.29, 0.30;

  SUBCASE("identical conditions flag nothing") {
    auto same = before;
    same.condition = "after:x";
    const auto report = stats::significance_report(before, {same}, 0.05);
    CHECK(report.flagged_layers("after:x").empty());
  }
  SUBCASE("a consistent drop is flagged") {
    auto after = before;
    after.condition = "after:x";
    after.subject_layer_mean.array() -= 0.05;
    after.subject_layer_mean(0, 0) -= 0.003;
    after.subject_layer_mean(1, 1) += 0.002;
    after.subject_layer_mean(2, 0) += 0.004;
    after.subject_layer_mean(3, 1) -= 0.001;
    const auto report = stats::significance_report(before, {after}, 0.05);
    CHECK(report.flagged_layers("after:x") == std::vector<int>{1, 2});
  }
  SUBCASE("mismatched subjects") {
    auto after = before;
    after.condition = "after:x";
    after.subject_ids[3] = "s9";
    CHECK_THROWS_AS(stats::significance_report(before, {after}, 0.05), Error);
  }
}

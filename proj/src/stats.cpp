#include "lingscrub/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "lingscrub/encoding.hpp"

namespace lingscrub::stats {

TTestResult paired_ttest_two_tailed(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw Error("paired t-test: length mismatch");
  if (a.size() < 2) throw Error("paired t-test: needs at least 2 pairs");
  const Vector d = a - b;
  const double n = static_cast<double>(d.size());
  const double mean = d.mean();
  const double var = (d.array() - mean).square().sum() / (n - 1.0);
  if (!(var > 0.0)) throw Error("degenerate pairs: differences are constant");
  TTestResult out;
  out.df = static_cast<int>(d.size()) - 1;
  out.t = mean / std::sqrt(var / n);
  boost::math::students_t dist(static_cast<double>(out.df));
  out.p = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t))));
  return out;
}

TTestResult paired_ttest_two_tailed(const std::vector<double>& a, const std::vector<double>& b) {
  return paired_ttest_two_tailed(Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size())),
                                 Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(b.size())));
}

std::vector<bool> bh_fdr(const std::vector<double>& pvals, double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error("FDR level must lie in (0, 1)");
  const std::size_t m = pvals.size();
  for (double p : pvals)
    if (!(p >= 0.0 && p <= 1.0)) throw Error("p-values must lie in [0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
  std::size_t cutoff = 0;  // number of rejections
  for (std::size_t i = m; i > 0; --i)
    if (pvals[order[i - 1]] <= static_cast<double>(i) * q / static_cast<double>(m)) {
      cutoff = i;
      break;
    }
  std::vector<bool> mask(m, false);
  for (std::size_t i = 0; i < cutoff; ++i) mask[order[i]] = true;
  return mask;
}

double layer_trend_correlation(const TrendInput& input) {
  if (input.delta_decode.size() != input.delta_align.size()) throw Error("trend: series lengths differ");
  if (input.delta_decode.size() < 3) throw Error("trend: needs at least 3 layers");
  return encoding::pearson(input.delta_decode, input.delta_align);
}

Vector voxel_trend_map(const Vector& delta_decode, const Matrix& delta_align_by_voxel) {
  if (delta_align_by_voxel.rows() != delta_decode.size()) throw Error("trend: layer count mismatch");
  Vector out(delta_align_by_voxel.cols());
  for (Eigen::Index v = 0; v < out.size(); ++v)
    out(v) = layer_trend_correlation({delta_decode, delta_align_by_voxel.col(v)});
  return out;
}

namespace {

double mean_over(const Vector& per_voxel, const IndexList& voxels, const std::string& what) {
  double sum = 0.0;
  std::size_t n = 0;
  for (auto v : voxels) {
    if (v >= static_cast<std::size_t>(per_voxel.size())) throw Error("atlas voxel outside the value vector");
    const double x = per_voxel(static_cast<Eigen::Index>(v));
    if (std::isnan(x)) continue;
    sum += x;
    ++n;
  }
  if (n == 0) throw Error(what + " has no defined voxels in this dataset");
  return sum / static_cast<double>(n);
}

}  // namespace

double roi_aggregate(const Vector& per_voxel, const AtlasMap& atlas, const std::string& roi) {
  if (atlas.voxel_to_parcel.size() != static_cast<std::size_t>(per_voxel.size()))
    throw Error("atlas voxel count does not match values");
  return mean_over(per_voxel, atlas.voxels_in_roi(roi), "ROI " + roi);
}

double parcel_aggregate(const Vector& per_voxel, const AtlasMap& atlas, const std::string& parcel) {
  if (atlas.voxel_to_parcel.size() != static_cast<std::size_t>(per_voxel.size()))
    throw Error("atlas voxel count does not match values");
  return mean_over(per_voxel, atlas.voxels_in_parcel(parcel), "parcel " + parcel);
}

std::vector<int> SignificanceReport::flagged_layers(const std::string& condition) const {
  std::vector<int> out;
  for (const auto& r : rows)
    if (r.condition == condition && r.reject) out.push_back(r.layer);
  return out;
}

SignificanceReport significance_report(const ConditionScores& before, const std::vector<ConditionScores>& after, double q) {
  if (!(q > 0.0 && q < 1.0)) throw Error("FDR level must lie in (0, 1)");
  SignificanceReport report;
  report.q = q;
  for (const auto& cond : after) {
    if (cond.subject_ids != before.subject_ids) throw Error("mismatched subject sets for condition " + cond.condition);
    if (cond.layers != before.layers) throw Error("mismatched layers for condition " + cond.condition);
    for (std::size_t l = 0; l < before.layers.size(); ++l) {
      const auto col = static_cast<Eigen::Index>(l);
      SignificanceRow row;
      row.condition = cond.condition;
      row.layer = before.layers[l];
      row.mean_before = before.subject_layer_mean.col(col).mean();
      row.mean_after = cond.subject_layer_mean.col(col).mean();
      try {
        row.test = paired_ttest_two_tailed(Vector(before.subject_layer_mean.col(col)), Vector(cond.subject_layer_mean.col(col)));
      } catch (const Error&) {
        // Identical or uniformly shifted pairs carry no test; keep them out of rejection.
        row.degenerate = true;
        row.test = {0.0, 1.0, static_cast<int>(before.subject_ids.size()) - 1};
      }
      report.rows.push_back(row);
    }
  }
  std::vector<double> p;
  for (const auto& r : report.rows) p.push_back(r.test.p);
  const auto mask = bh_fdr(p, q);
  for (std::size_t i = 0; i < report.rows.size(); ++i) report.rows[i].reject = mask[i] && !report.rows[i].degenerate;
  return report;
}

}  // namespace lingscrub::stats

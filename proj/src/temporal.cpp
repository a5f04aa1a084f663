#include "lingscrub/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lingscrub::temporal {

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

double lanczos_kernel(double x, int lobes) {
  if (std::abs(x) >= static_cast<double>(lobes)) return 0.0;
  return sinc(x) * sinc(x / static_cast<double>(lobes));
}

Downsampled lanczos_downsample(const FeatureMatrix& word_feats, const WordTimeline& timeline, std::size_t tr_count,
                               double tr_seconds, const LanczosConfig& cfg) {
  if (cfg.lobes < 1) throw Error("Lanczos filter needs at least one lobe");
  if (tr_count < 1) throw Error("tr_count must be positive");
  if (!(tr_seconds > 0.0)) throw Error("TR duration must be positive");
  if (timeline.size() != word_feats.rows()) throw Error("timeline length does not match word features");
  for (std::size_t w = 1; w < timeline.size(); ++w)
    if (timeline.onset_seconds[w] < timeline.onset_seconds[w - 1]) throw Error("timeline onsets must be sorted");

  const auto& onsets = timeline.onset_seconds;
  const double radius = static_cast<double>(cfg.lobes);
  Downsampled out;
  out.features.layer_index = word_feats.layer_index;
  out.features.unit_kind = UnitKind::tr;
  out.features.values = Matrix::Zero(static_cast<Eigen::Index>(tr_count), word_feats.values.cols());

  for (std::size_t t = 0; t < tr_count; ++t) {
    const double centre = static_cast<double>(t);
    // Words whose onset lies strictly inside the support.
    const auto lo = std::upper_bound(onsets.begin(), onsets.end(), (centre - radius) * tr_seconds);
    const auto hi = std::lower_bound(onsets.begin(), onsets.end(), (centre + radius) * tr_seconds);
    double total = 0.0;
    auto row = out.features.values.row(static_cast<Eigen::Index>(t));
    for (auto it = lo; it < hi; ++it) {
      const auto w = static_cast<Eigen::Index>(it - onsets.begin());
      const double k = lanczos_kernel(centre - *it / tr_seconds, cfg.lobes);
      if (k == 0.0) continue;
      row += k * word_feats.values.row(w);
      total += k;
    }
    if (lo >= hi || std::abs(total) < 1e-12) {
      row.setZero();
      out.empty_rows.push_back(t);
    } else if (cfg.normalize_dc) {
      row /= total;
    }
  }
  if (out.empty_rows.size() == tr_count) throw Error("no word falls inside any TR window; timeline outside scan");
  return out;
}

Matrix fir_expand(const Matrix& tr_feats, const std::vector<int>& delays) {
  if (delays.empty()) throw Error("FIR needs at least one delay");
  for (std::size_t i = 0; i < delays.size(); ++i) {
    if (delays[i] < 0) throw Error("FIR delays must be non-negative");
    if (i > 0 && delays[i] <= delays[i - 1]) throw Error("FIR delays must be strictly increasing");
    if (delays[i] >= tr_feats.rows())
      throw Error("FIR delay " + std::to_string(delays[i]) + " >= TR count " + std::to_string(tr_feats.rows()));
  }
  const Eigen::Index rows = tr_feats.rows();
  const Eigen::Index dims = tr_feats.cols();
  Matrix out = Matrix::Zero(rows, dims * static_cast<Eigen::Index>(delays.size()));
  for (std::size_t j = 0; j < delays.size(); ++j) {
    const Eigen::Index d = delays[j];
    out.block(d, static_cast<Eigen::Index>(j) * dims, rows - d, dims) = tr_feats.topRows(rows - d);
  }
  return out;
}

FeatureMatrix fir_expand(const FeatureMatrix& tr_feats, const FirConfig& cfg) {
  if (tr_feats.unit_kind != UnitKind::tr) throw Error("FIR expansion expects TR-rate features");
  FeatureMatrix out = tr_feats;
  out.values = fir_expand(tr_feats.values, cfg.delays);
  return out;
}

ZScored zscore_columns(const Matrix& m) {
  if (m.rows() < 2) throw Error("z-scoring needs at least 2 rows");
  ZScored out;
  out.values = m;
  const double n = static_cast<double>(m.rows());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    auto col = out.values.col(c);
    const double mean = col.mean();
    col.array() -= mean;
    const double sd = std::sqrt(col.squaredNorm() / n);
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      col.setZero();
      out.constant_columns.push_back(static_cast<std::size_t>(c));
      continue;
    }
    col /= sd;
    // A second centring pass removes the rounding left by the first.
    col.array() -= col.mean();
  }
  return out;
}

}  // namespace lingscrub::temporal

#pragma once

#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub::temporal {

struct LanczosConfig {
  int lobes = 3;
  bool normalize_dc = true;
};

struct FirConfig {
  std::vector<int> delays{1, 2, 3, 4, 5, 6, 7, 8};
  double tr_seconds = 1.5;
};

/// sinc(x) * sinc(x / lobes) inside |x| < lobes, zero outside.
double lanczos_kernel(double x, int lobes);

struct Downsampled {
  FeatureMatrix features;  // tr kind
  IndexList empty_rows;    // TRs with no word inside the kernel support
};

/// TR t sits at time t * tr_seconds; each TR is a kernel-weighted average of
/// word features, normalised to unit DC gain when configured.
Downsampled lanczos_downsample(const FeatureMatrix& word_feats, const WordTimeline& timeline, std::size_t tr_count,
                               double tr_seconds, const LanczosConfig& cfg = {});

/// Concatenates copies of the input delayed by each configured TR offset;
/// rows before the scan start are zero.
FeatureMatrix fir_expand(const FeatureMatrix& tr_feats, const FirConfig& cfg = {});
Matrix fir_expand(const Matrix& tr_feats, const std::vector<int>& delays);

struct ZScored {
  Matrix values;
  IndexList constant_columns;
};

/// Column-wise mean 0 and population variance 1. Constant columns become 0.
ZScored zscore_columns(const Matrix& m);

}  // namespace lingscrub::temporal

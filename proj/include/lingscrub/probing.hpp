#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub::probing {

/// Multinomial logistic regression probe.
struct ProbeModel {
  Matrix weights;  // dims x classes
  Vector bias;     // per class
  double l2 = 0.0;
  int classes = 0;
  int iterations = 0;
  double gradient_norm = 0.0;
};

struct ProbeOptions {
  std::optional<double> l2;  // defaults to 1/n
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  /// Warm start (dims x classes, classes); empty means zero initialisation.
  Matrix initial_weights;
  Vector initial_bias;
};

/// Minimises mean cross-entropy + l2 * ||weights||^2 by full-batch gradient
/// descent with backtracking (accelerated, with restarts), starting from zero
/// unless a warm start is given. Deterministic.
ProbeModel train_probe(const Matrix& X, const LabelList& y, const ProbeOptions& opts = {});

/// Picks l2 from `grid` by accuracy on an inner validation split of the
/// training rows (every 4th group held out, or every 4th row when `groups` is
/// empty), then refits on all rows. Ties go to the larger penalty.
struct SelectedProbe {
  ProbeModel model;
  std::vector<double> validation_accuracy;  // per grid entry
};
SelectedProbe train_probe_selected(const Matrix& X, const LabelList& y, const std::vector<int>& groups,
                                   const std::vector<double>& grid, const ProbeOptions& opts = {});

/// Accuracy in percent; argmax ties go to the lowest class index.
double evaluate_probe(const ProbeModel& model, const Matrix& X, const LabelList& y);

LabelList predict(const ProbeModel& model, const Matrix& X);

/// Mean log-likelihood of the labels under the model (no penalty term).
double mean_log_likelihood(const ProbeModel& model, const Matrix& X, const LabelList& y);

/// Interleaved train/test split: every `test_every`-th row (offset
/// test_every - 1) is held out, the rest train the probe.
struct Split {
  IndexList train;
  IndexList test;
};
Split interleaved_split(std::size_t n, int test_every = 4);

/// Same, over groups (sentences): every `test_every`-th distinct group id,
/// in sorted id order, is held out whole, so no sentence straddles the split.
Split grouped_split(const std::vector<int>& groups, int test_every = 4);

Matrix take_rows(const Matrix& m, const IndexList& rows);
LabelList take(const LabelList& v, const IndexList& rows);

// SentEval-format probing corpora: `split<TAB>label<TAB>sentence`.
struct SentEvalRow {
  std::string split;  // "tr", "va" or "te"
  std::string label;
  std::string sentence;
};
std::vector<SentEvalRow> load_senteval(const std::string& path);

/// Rows of `features` aligned with `rows`, restricted to one split, with
/// labels encoded over the whole corpus so codes agree across splits.
struct LabelledSet {
  Matrix X;
  LabelList y;
};
LabelledSet senteval_subset(const std::vector<SentEvalRow>& rows, const Matrix& features, const std::string& split);

}  // namespace lingscrub::probing

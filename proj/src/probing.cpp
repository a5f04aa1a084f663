#include "lingscrub/probing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "lingscrub/annotation.hpp"
#include "lingscrub/text.hpp"

namespace lingscrub::probing {

namespace {

int count_classes(const LabelList& y) {
  int k = 0;
  for (int v : y) {
    if (v < 0) throw Error("negative class label");
    k = std::max(k, v + 1);
  }
  return k;
}

Matrix one_hot(const LabelList& y, int k) {
  Matrix Y = Matrix::Zero(static_cast<Eigen::Index>(y.size()), k);
  for (std::size_t i = 0; i < y.size(); ++i) Y(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return Y;
}

// Row-wise softmax of logits in place; returns sum of log-sum-exp.
double softmax_rows(Matrix& logits) {
  double lse_total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - m).exp();
    const double s = logits.row(i).sum();
    logits.row(i) /= s;
    lse_total += m + std::log(s);
  }
  return lse_total;
}

// Mean cross-entropy for given logits; one-hot targets Y.
double cross_entropy(const Matrix& logits, const Matrix& Y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
    total += lse - logits.row(i).dot(Y.row(i));
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

ProbeModel train_probe(const Matrix& X, const LabelList& y, const ProbeOptions& opts) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("probe: label count does not match feature rows");
  if (!X.allFinite()) throw Error("probe: non-finite features");
  const int k = count_classes(y);
  {
    std::vector<bool> present(static_cast<std::size_t>(k), false);
    for (int v : y) present[static_cast<std::size_t>(v)] = true;
    if (std::count(present.begin(), present.end(), true) < 2) throw Error("probe: single class present");
  }
  const double n = static_cast<double>(X.rows());
  const double l2 = opts.l2.value_or(1.0 / n);
  if (l2 < 0.0) throw Error("probe: negative l2");

  const Matrix Y = one_hot(y, k);
  ProbeModel model;
  model.classes = k;
  model.l2 = l2;

  Matrix W = Matrix::Zero(X.cols(), k);
  Vector b = Vector::Zero(k);
  if (opts.initial_weights.size() > 0) {
    if (opts.initial_weights.rows() != X.cols() || opts.initial_weights.cols() != k || opts.initial_bias.size() != k)
      throw Error("probe: warm start has the wrong shape");
    W = opts.initial_weights;
    b = opts.initial_bias;
  }
  auto logits_of = [&](const Matrix& Wm, const Vector& bm) {
    Matrix Z = X * Wm;
    Z.rowwise() += bm.transpose();
    return Z;
  };
  auto penalised = [&](const Matrix& Z, const Matrix& Wm) { return cross_entropy(Z, Y) + l2 * Wm.squaredNorm(); };
  auto gradient = [&](const Matrix& Z, const Matrix& Wm, Matrix& gW, Vector& gb) {
    Matrix P = Z;
    softmax_rows(P);
    P -= Y;
    gW = X.transpose() * P / n + 2.0 * l2 * Wm;
    gb = P.colwise().sum().transpose() / n;
    return std::sqrt(gW.squaredNorm() + gb.squaredNorm());
  };

  // Accelerated gradient descent with backtracking and function-value
  // restarts. Logits are affine in the parameters, so they are carried along
  // instead of recomputed: two products with X per iteration.
  Matrix Z = logits_of(W, b);
  Matrix W_prev = W, Z_prev = Z, gW;
  Vector b_prev = b, gb;
  double f = penalised(Z, W);
  double step = 1.0, t = 1.0;
  model.iterations = 0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double beta = (t - 1.0) / t_next;
    Matrix Wy = W + beta * (W - W_prev);
    Vector by = b + beta * (b - b_prev);
    Matrix Zy = Z + beta * (Z - Z_prev);
    const double gnorm = gradient(Zy, Wy, gW, gb);
    if (gnorm <= opts.gradient_tolerance) {
      W = std::move(Wy);
      b = std::move(by);
      break;
    }
    const double fy = beta == 0.0 ? f : penalised(Zy, Wy);
    Matrix dZ = X * gW;
    dZ.rowwise() += gb.transpose();

    Matrix Zn, Wn;
    double fn = 0.0;
    step *= 1.25;
    while (true) {
      Zn = Zy - step * dZ;
      Wn = Wy - step * gW;
      fn = penalised(Zn, Wn);
      if (fn <= fy - 0.5 * step * gnorm * gnorm) break;
      step *= 0.5;
      if (step < 1e-20) break;
    }
    if (step < 1e-20) break;
    if (!Wn.allFinite() || !std::isfinite(fn)) throw NumericalError("probe: optimisation diverged");
    model.iterations = it + 1;

    if (fn > f) {
      // Momentum overshot: restart from the current iterate.
      W_prev = W;
      b_prev = b;
      Z_prev = Z;
      t = 1.0;
      continue;
    }
    W_prev = std::move(W);
    b_prev = b;
    Z_prev = std::move(Z);
    W = std::move(Wn);
    b = by - step * gb;
    Z = std::move(Zn);
    f = fn;
    t = t_next;
  }
  model.gradient_norm = gradient(logits_of(W, b), W, gW, gb);
  model.weights = std::move(W);
  model.bias = std::move(b);
  return model;
}

SelectedProbe train_probe_selected(const Matrix& X, const LabelList& y, const std::vector<int>& groups,
                                   const std::vector<double>& grid, const ProbeOptions& opts) {
  if (grid.empty()) throw Error("probe: empty l2 grid");
  if (!groups.empty() && groups.size() != y.size()) throw Error("probe: group count does not match labels");
  const Split inner = groups.empty() ? interleaved_split(y.size(), 4) : grouped_split(groups, 4);
  const Matrix Xtr = take_rows(X, inner.train), Xva = take_rows(X, inner.test);
  const LabelList ytr = take(y, inner.train), yva = take(y, inner.test);

  // Walk the grid from the strongest penalty down, warm-starting each fit
  // from the previous solution.
  std::vector<std::size_t> order(grid.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] > grid[b]; });

  SelectedProbe out;
  out.validation_accuracy.assign(grid.size(), 0.0);
  double best_acc = -1.0;
  ProbeModel best, previous;
  for (std::size_t i : order) {
    ProbeOptions o = opts;
    o.l2 = grid[i];
    if (previous.weights.size() > 0) {
      o.initial_weights = previous.weights;
      o.initial_bias = previous.bias;
    }
    previous = train_probe(Xtr, ytr, o);
    const double acc = evaluate_probe(previous, Xva, yva);
    out.validation_accuracy[i] = acc;
    if (acc > best_acc) {  // strict: ties keep the larger penalty
      best_acc = acc;
      best = previous;
    }
  }
  ProbeOptions o = opts;
  o.l2 = best.l2;
  o.initial_weights = best.weights;
  o.initial_bias = best.bias;
  out.model = train_probe(X, y, o);
  return out;
}

LabelList predict(const ProbeModel& model, const Matrix& X) {
  if (X.cols() != model.weights.rows()) throw Error("probe: feature dimension mismatch");
  Matrix logits = X * model.weights;
  logits.rowwise() += model.bias.transpose();
  LabelList out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (int c = 1; c < model.classes; ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double evaluate_probe(const ProbeModel& model, const Matrix& X, const LabelList& y) {
  if (static_cast<std::size_t>(X.rows()) != y.size()) throw Error("probe: label count does not match feature rows");
  if (y.empty()) throw Error("probe: empty evaluation set");
  const auto pred = predict(model, X);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += pred[i] == y[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(y.size());
}

double mean_log_likelihood(const ProbeModel& model, const Matrix& X, const LabelList& y) {
  Matrix logits = X * model.weights;
  logits.rowwise() += model.bias.transpose();
  Matrix Y = Matrix::Zero(X.rows(), model.classes);
  for (std::size_t i = 0; i < y.size(); ++i) Y(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return -cross_entropy(logits, Y);
}

Split interleaved_split(std::size_t n, int test_every) {
  if (test_every < 2) throw Error("test_every must be at least 2");
  if (n < static_cast<std::size_t>(test_every)) throw Error("too few rows to split");
  const auto k = static_cast<std::size_t>(test_every);
  Split s;
  for (std::size_t i = 0; i < n; ++i) (i % k == k - 1 ? s.test : s.train).push_back(i);
  return s;
}

Split grouped_split(const std::vector<int>& groups, int test_every) {
  if (test_every < 2) throw Error("test_every must be at least 2");
  std::map<int, std::size_t> ordinal;
  for (int g : groups) ordinal.emplace(g, 0);
  std::size_t next = 0;
  for (auto& [g, o] : ordinal) o = next++;
  if (ordinal.size() < static_cast<std::size_t>(test_every)) throw Error("too few groups to split");
  const auto k = static_cast<std::size_t>(test_every);
  Split s;
  for (std::size_t i = 0; i < groups.size(); ++i) (ordinal.at(groups[i]) % k == k - 1 ? s.test : s.train).push_back(i);
  return s;
}

Matrix take_rows(const Matrix& m, const IndexList& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

LabelList take(const LabelList& v, const IndexList& rows) {
  LabelList out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

std::vector<SentEvalRow> load_senteval(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<SentEvalRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto first = line.find('\t');
    const auto second = first == std::string::npos ? std::string::npos : line.find('\t', first + 1);
    if (second == std::string::npos) throw Error("SentEval rows need split<TAB>label<TAB>sentence");
    rows.push_back({line.substr(0, first), line.substr(first + 1, second - first - 1), line.substr(second + 1)});
  }
  return rows;
}

LabelledSet senteval_subset(const std::vector<SentEvalRow>& rows, const Matrix& features, const std::string& split) {
  if (static_cast<std::size_t>(features.rows()) != rows.size())
    throw Error("SentEval rows do not match feature rows");
  std::vector<std::string> raw;
  raw.reserve(rows.size());
  for (const auto& r : rows) raw.push_back(r.label);
  const auto codes = annotation::encode_string_labels(raw);
  IndexList keep;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].split == split) keep.push_back(i);
  return {take_rows(features, keep), take(codes, keep)};
}

}  // namespace lingscrub::probing

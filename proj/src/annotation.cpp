#include "lingscrub/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "lingscrub/rng.hpp"
#include "lingscrub/text.hpp"

namespace lingscrub::annotation {

LabelList regroup_labels(const std::string& task, const LabelList& raw) {
  LabelList out;
  out.reserve(raw.size());
  for (int v : raw) {
    if (v < 0) throw Error("negative raw value for " + task);
    if (task == "SentenceLength") {
      // The documented bins overlap at 5; it belongs to the first bin.
      out.push_back(v <= 5 ? 0 : (v <= 8 ? 1 : 2));
    } else if (task == "TreeDepth") {
      if (v < 5) throw Error("TreeDepth value " + std::to_string(v) + " out of documented range");
      out.push_back(v == 5 ? 0 : (v <= 7 ? 1 : 2));
    } else if (task == "TopConstituents") {
      if (v < 1) throw Error("TopConstituents value " + std::to_string(v) + " out of documented range");
      out.push_back(v == 1 ? 0 : 1);
    } else {
      out.push_back(v);
    }
  }
  return out;
}

LabelList expand_sentence_labels(const LabelList& sentence_labels, const std::vector<int>& sentence_index) {
  LabelList out;
  out.reserve(sentence_index.size());
  for (std::size_t w = 0; w < sentence_index.size(); ++w) {
    const int s = sentence_index[w];
    if (s < 0 || static_cast<std::size_t>(s) >= sentence_labels.size())
      throw Error("sentence index " + std::to_string(s) + " out of range at word " + std::to_string(w));
    out.push_back(sentence_labels[static_cast<std::size_t>(s)]);
  }
  return out;
}

LabelList encode_string_labels(const std::vector<std::string>& raw) {
  const std::set<std::string> distinct(raw.begin(), raw.end());
  std::map<std::string, int> code;
  int next = 0;
  for (const auto& s : distinct) code[s] = next++;
  LabelList out;
  out.reserve(raw.size());
  for (const auto& s : raw) out.push_back(code[s]);
  return out;
}

SimilarityMatrix task_similarity_matrix(const LabelTable& labels) {
  if (labels.words() < 2) throw Error("task similarity needs at least 2 words");
  const auto tasks = static_cast<Eigen::Index>(labels.tasks());
  Matrix centered = labels.labels.cast<double>();
  centered.rowwise() -= centered.colwise().mean();
  const Vector norms = centered.colwise().norm();

  SimilarityMatrix sim;
  sim.task_names = labels.task_names;
  sim.constant.assign(static_cast<std::size_t>(tasks), false);
  for (Eigen::Index t = 0; t < tasks; ++t) sim.constant[static_cast<std::size_t>(t)] = norms(t) == 0.0;

  sim.values = Matrix::Constant(tasks, tasks, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index a = 0; a < tasks; ++a) {
    if (sim.constant[static_cast<std::size_t>(a)]) continue;
    sim.values(a, a) = 1.0;
    for (Eigen::Index b = a + 1; b < tasks; ++b) {
      if (sim.constant[static_cast<std::size_t>(b)]) continue;
      const double r = centered.col(a).dot(centered.col(b)) / (norms(a) * norms(b));
      sim.values(a, b) = sim.values(b, a) = std::clamp(r, -1.0, 1.0);
    }
  }
  return sim;
}

void save_similarity_csv(const SimilarityMatrix& sim, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "task";
  for (const auto& n : sim.task_names) out << ',' << n;
  out << '\n';
  for (Eigen::Index a = 0; a < sim.values.rows(); ++a) {
    out << sim.task_names[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < sim.values.cols(); ++b) out << ',' << format_real(sim.values(a, b));
    out << '\n';
  }
}

LabelList random_property_labels(std::size_t n, int num_classes, std::uint64_t seed) {
  if (num_classes < 2) throw Error("random property needs at least 2 classes");
  Rng rng(seed);
  LabelList out(n);
  for (auto& v : out) v = static_cast<int>(rng.index(static_cast<std::uint64_t>(num_classes)));
  return out;
}

double chance_rate(const LabelList& labels) {
  if (labels.empty()) throw Error("chance rate of empty label list");
  std::map<int, std::size_t> counts;
  for (int v : labels) ++counts[v];
  std::size_t best = 0;
  for (const auto& [_, c] : counts) best = std::max(best, c);
  return 100.0 * static_cast<double>(best) / static_cast<double>(labels.size());
}

double majority_baseline(const LabelList& train, const LabelList& test) {
  if (train.empty() || test.empty()) throw Error("majority baseline needs non-empty label lists");
  std::map<int, std::size_t> counts;
  for (int v : train) ++counts[v];
  int majority = counts.begin()->first;  // ties go to the lowest class
  for (const auto& [cls, c] : counts)
    if (c > counts[majority]) majority = cls;
  const auto hits = std::count(test.begin(), test.end(), majority);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(test.size());
}

}  // namespace lingscrub::annotation

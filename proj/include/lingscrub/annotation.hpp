#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lingscrub/types.hpp"

namespace lingscrub::annotation {

/// Collapses raw values into balanced classes for SentenceLength, TreeDepth
/// and TopConstituents; other tasks pass through unchanged.
///
///   SentenceLength   <=5 -> 0, 6-8 -> 1, >=9 -> 2
///   TreeDepth          5 -> 0, 6-7 -> 1, >=8 -> 2   (raw < 5 rejected)
///   TopConstituents    1 -> 0, >=2 -> 1             (raw < 1 rejected)
LabelList regroup_labels(const std::string& task, const LabelList& raw);

/// Broadcasts one label per sentence onto the words of that sentence.
LabelList expand_sentence_labels(const LabelList& sentence_labels, const std::vector<int>& sentence_index);

/// Maps arbitrary string labels to dense integers in lexicographic order.
LabelList encode_string_labels(const std::vector<std::string>& raw);

struct SimilarityMatrix {
  std::vector<std::string> task_names;
  Matrix values;               // NaN where undefined
  std::vector<bool> constant;  // per task; its row and column are undefined
};

/// Pearson correlation between every pair of label columns.
SimilarityMatrix task_similarity_matrix(const LabelTable& labels);
void save_similarity_csv(const SimilarityMatrix& sim, const std::string& path);

/// n labels drawn uniformly from 0..num_classes-1.
LabelList random_property_labels(std::size_t n, int num_classes, std::uint64_t seed);

/// Majority-class share in percent.
double chance_rate(const LabelList& labels);

/// Accuracy on `test` of always predicting the majority class of `train`
/// (ties to the lowest class), in percent. This is what a probe without
/// usable information achieves when train and test priors differ.
double majority_baseline(const LabelList& train, const LabelList& test);

}  // namespace lingscrub::annotation

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lingscrub/dataset.hpp"
#include "lingscrub/types.hpp"

namespace lingscrub::synth {

struct SynthConfig {
  std::uint64_t seed = 1;
  std::size_t n_words = 2000;
  std::size_t dims = 64;
  int n_layers = 12;
  std::vector<std::string> task_names{"SentenceLength", "TreeDepth", "TopConstituents",
                                      "Tense", "SubjectNumber", "ObjectNumber"};
  std::vector<int> class_counts{3, 3, 2, 2, 2, 2};
  std::size_t n_subjects = 6;
  std::size_t trs = 400;
  double tr_seconds = 1.5;
  std::size_t voxels = 500;
  /// layers x tasks; empty selects a mid-layer bump between 4 and 6.
  Matrix signal_strength;
  double noise_sd = 1.0;
  /// Scale of the property-independent latent content in each layer.
  double latent_scale = 1.0;
  std::size_t latent_dims = 8;
  /// Fraction of voxel signal variance driven by the property labels.
  double brain_coupling = 0.7;
  double response_noise_sd = 1.0;
  /// Share of the response noise variance that is one subject-wide
  /// timecourse (global physiological noise) rather than independent per voxel.
  double shared_noise_share = 0.5;
  int min_sentence_words = 4;
  int max_sentence_words = 12;
};

/// Default per-layer strength: base + amplitude * bump peaking mid-stack.
Matrix mid_peak_strength(int n_layers, std::size_t n_tasks, double base = 4.0, double amplitude = 2.0);

struct SynthDataset {
  std::vector<FeatureMatrix> features;
  LabelTable labels;
  WordTimeline timeline;
  std::vector<ResponseMatrix> responses;
  AtlasMap atlas;
  /// Planted unit direction per (layer, task): directions[layer].col(task).
  std::vector<Matrix> directions;
};

SynthDataset generate_dataset(const SynthConfig& cfg);

/// Writes layer_XX.fmat, labels.tsv, timeline.tsv, sub-XX.fmat, atlas.csv
/// and a ready-to-run pipeline.json into `dir`.
void write_dataset(const SynthDataset& data, const SynthConfig& cfg, const fs::path& dir);

// ---------------------------------------------------------------------------
// Independent oracles. They take deliberately different numerical routes
// from the production code.
// ---------------------------------------------------------------------------

/// Least-squares residual of W on [1, labels] via an SVD pseudoinverse, with
/// the column means of W added back.
Matrix ols_residual_oracle(const Matrix& W, const LabelList& labels);

/// Textbook two-pass Pearson correlation.
double naive_pearson_oracle(const std::vector<double>& y, const std::vector<double>& yhat);

/// Quadratic-time Benjamini-Hochberg straight from the definition.
std::vector<bool> naive_bh_oracle(const std::vector<double>& pvals, double q);

}  // namespace lingscrub::synth

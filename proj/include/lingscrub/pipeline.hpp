#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lingscrub/dataset.hpp"
#include "lingscrub/encoding.hpp"
#include "lingscrub/removal.hpp"
#include "lingscrub/temporal.hpp"

namespace lingscrub::pipeline {

inline constexpr const char* kVersion = "1.0.0";

/// Exit statuses of run_pipeline.
enum ExitCode : int { ok = 0, validation_failure = 2, numerical_failure = 3 };

enum class Stage { validate, remove, probe, align, encode, stats, trend };

const std::vector<Stage>& all_stages();
std::string stage_name(Stage s);
Stage parse_stage(const std::string& name);

struct RemovalSettings {
  std::vector<std::string> tasks;  // empty: every task in the labels file
  double lambda = 0.0;
  removal::LabelEncoding encoding = removal::LabelEncoding::scalar;
  std::string method = "ridge";  // ridge | inlp
  int inlp_iterations = 8;
  bool include_all = true;        // joint removal of every task
  bool random_baseline = true;
  int random_classes = 2;
};

struct ProbeSettings {
  std::optional<double> l2;  // fixed penalty; unset selects one from l2_grid
  std::vector<double> l2_grid{1e-3, 1e-2, 1e-1, 1.0, 10.0};
  int test_every = 4;
  bool split_by_sentence = false;  // hold out whole sentences instead of single words
};

struct PipelineConfig {
  fs::path base_dir;
  fs::path output_dir;
  std::uint64_t seed = 1;
  double tr_seconds = 1.5;

  std::vector<fs::path> feature_paths;
  fs::path labels_path;
  fs::path timeline_path;
  std::vector<std::pair<std::string, fs::path>> response_paths;  // subject id, file
  fs::path atlas_path;
  fs::path rois_path;

  RemovalSettings removal;
  ProbeSettings probe;
  temporal::LanczosConfig lanczos;
  temporal::FirConfig fir;
  encoding::CvConfig encoding;
  double q = 0.05;

  nlohmann::json raw;  // effective configuration after overrides
};

/// Applies `key.path=value` overrides; values parse as JSON when they can,
/// otherwise they are taken as strings.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Parses and validates a configuration. Relative paths resolve against
/// `base_dir`. Throws Error on invalid settings or missing files.
PipelineConfig parse_config(const nlohmann::json& config, const fs::path& base_dir);
PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {});

/// Condition labels used across stages.
std::string after_condition(const std::string& task);  // "after:<task>"
inline constexpr const char* kBefore = "before";
inline constexpr const char* kAfterAll = "after_all";
inline constexpr const char* kRandom = "random_baseline";

struct ProbeRow {
  std::string task;
  std::string condition;  // before, after, after_other:<task>, after_all, random_baseline
  double accuracy = 0.0;
  double chance = 0.0;
};

/// Every probe of one layer: each task before removal, after its own
/// removal, after each other task's removal, after joint removal and after
/// random-property removal. Removers are fitted on the training words and
/// applied to all words. `sentence_index` is required when the settings ask
/// for a sentence-level split.
std::vector<ProbeRow> probe_layer(const FeatureMatrix& W, const LabelTable& labels, const std::vector<std::string>& tasks,
                                  const LabelList& random_labels, const RemovalSettings& removal_cfg,
                                  const ProbeSettings& probe_cfg, const std::vector<int>& sentence_index = {});

struct RunOptions {
  bool force = false;  // ignore matching manifests
  bool quiet = false;
};

/// Runs the requested stages in dependency order. Stages whose manifest
/// matches the current inputs are skipped. Upstream stages that are not
/// requested must already have outputs.
int run_pipeline(const PipelineConfig& config, const std::set<Stage>& stages, const RunOptions& opts = {});

/// Writes report/probing_table.csv, trend_roi.csv, alignment_by_layer.csv
/// and voxel_trend.csv from completed stats and trend outputs.
void emit_report(const fs::path& output_dir);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);
std::string sha256_text(const std::string& text);

}  // namespace lingscrub::pipeline

#include "lingscrub/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "lingscrub/annotation.hpp"
#include "lingscrub/parallel.hpp"
#include "lingscrub/probing.hpp"
#include "lingscrub/rng.hpp"
#include "lingscrub/stats.hpp"
#include "lingscrub/text.hpp"

namespace lingscrub::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Stages and configuration
// ---------------------------------------------------------------------------

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> stages{Stage::validate, Stage::remove, Stage::probe, Stage::align,
                                         Stage::encode,   Stage::stats,  Stage::trend};
  return stages;
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::validate: return "validate";
    case Stage::remove: return "remove";
    case Stage::probe: return "probe";
    case Stage::align: return "align";
    case Stage::encode: return "encode";
    case Stage::stats: return "stats";
    case Stage::trend: return "trend";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : all_stages())
    if (stage_name(s) == name) return s;
  throw Error("unknown stage " + name);
}

std::string after_condition(const std::string& task) { return "after:" + task; }

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw Error("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &config;
  for (const auto& part : split(key, '.')) {
    if (part.empty()) throw Error("empty key segment in override " + key);
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
  }
  *node = value;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
  try {
    return j[key].get<T>();
  } catch (const json::exception& e) {
    throw Error(std::string("config key ") + key + ": " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty() || !fs::is_regular_file(p)) throw Error("missing " + what + " file: " + p.string());
}

}  // namespace

PipelineConfig parse_config(const json& config, const fs::path& base_dir) {
  if (!config.is_object()) throw Error("config must be a JSON object");
  PipelineConfig cfg;
  cfg.raw = config;
  cfg.base_dir = base_dir;
  cfg.output_dir = resolve(base_dir, get_or<std::string>(config, "output_dir", "out"));
  cfg.seed = get_or<std::uint64_t>(config, "seed", 1);
  cfg.tr_seconds = get_or<double>(config, "tr_seconds", 1.5);
  if (!(cfg.tr_seconds > 0.0)) throw Error("tr_seconds must be positive");

  const json paths = config.value("paths", json::object());
  for (const auto& f : paths.value("features", json::array())) cfg.feature_paths.push_back(resolve(base_dir, f.get<std::string>()));
  if (cfg.feature_paths.empty()) throw Error("paths.features lists no layers");
  cfg.labels_path = resolve(base_dir, get_or<std::string>(paths, "labels", ""));
  cfg.timeline_path = resolve(base_dir, get_or<std::string>(paths, "timeline", ""));
  cfg.atlas_path = resolve(base_dir, get_or<std::string>(paths, "atlas", ""));
  cfg.rois_path = resolve(base_dir, get_or<std::string>(paths, "rois", ""));
  int auto_id = 1;
  for (const auto& r : paths.value("responses", json::array())) {
    if (r.is_string()) {
      std::ostringstream id;
      id << std::setw(2) << std::setfill('0') << auto_id;
      cfg.response_paths.emplace_back(id.str(), resolve(base_dir, r.get<std::string>()));
    } else {
      cfg.response_paths.emplace_back(get_or<std::string>(r, "subject", std::to_string(auto_id)),
                                      resolve(base_dir, get_or<std::string>(r, "path", "")));
    }
    ++auto_id;
  }
  if (cfg.response_paths.empty()) throw Error("paths.responses lists no subjects");

  for (const auto& f : cfg.feature_paths) require_file(f, "feature");
  require_file(cfg.labels_path, "labels");
  require_file(cfg.timeline_path, "timeline");
  require_file(cfg.atlas_path, "atlas");
  if (!cfg.rois_path.empty()) require_file(cfg.rois_path, "ROI");
  for (const auto& [_, p] : cfg.response_paths) require_file(p, "response");

  const json rem = config.value("removal", json::object());
  cfg.removal.tasks = get_or<std::vector<std::string>>(rem, "tasks", {});
  cfg.removal.lambda = get_or<double>(rem, "lambda", 0.0);
  if (!(cfg.removal.lambda >= 0.0)) throw Error("removal.lambda must be >= 0");
  cfg.removal.encoding = removal::parse_encoding(get_or<std::string>(rem, "encoding", "scalar"));
  cfg.removal.method = get_or<std::string>(rem, "method", "ridge");
  if (cfg.removal.method != "ridge" && cfg.removal.method != "inlp") throw Error("removal.method must be ridge or inlp");
  cfg.removal.inlp_iterations = get_or<int>(rem, "inlp_iterations", 8);
  if (cfg.removal.inlp_iterations < 1) throw Error("removal.inlp_iterations must be >= 1");
  cfg.removal.include_all = get_or<bool>(rem, "include_all", true);
  cfg.removal.random_baseline = get_or<bool>(rem, "random_baseline", true);
  cfg.removal.random_classes = get_or<int>(rem, "random_classes", 2);
  if (cfg.removal.random_classes < 2) throw Error("removal.random_classes must be >= 2");

  const json probe = config.value("probe", json::object());
  if (probe.contains("l2") && !probe["l2"].is_null()) {
    cfg.probe.l2 = probe["l2"].get<double>();
    if (!(*cfg.probe.l2 >= 0.0)) throw Error("probe.l2 must be >= 0");
  }
  cfg.probe.l2_grid = get_or<std::vector<double>>(probe, "l2_grid", cfg.probe.l2_grid);
  if (cfg.probe.l2_grid.empty()) throw Error("probe.l2_grid is empty");
  for (double l : cfg.probe.l2_grid)
    if (!(l >= 0.0)) throw Error("probe.l2_grid entries must be >= 0");
  const std::string split_unit = get_or<std::string>(probe, "split", "word");
  if (split_unit != "word" && split_unit != "sentence") throw Error("probe.split must be word or sentence");
  cfg.probe.split_by_sentence = split_unit == "sentence";
  cfg.probe.test_every = get_or<int>(probe, "test_every", 4);
  if (cfg.probe.test_every < 2) throw Error("probe.test_every must be >= 2");

  const json temporal = config.value("temporal", json::object());
  const json lz = temporal.value("lanczos", json::object());
  cfg.lanczos.lobes = get_or<int>(lz, "lobes", 3);
  cfg.lanczos.normalize_dc = get_or<bool>(lz, "normalize_dc", true);
  if (cfg.lanczos.lobes < 1) throw Error("temporal.lanczos.lobes must be >= 1");
  const json fir = temporal.value("fir", json::object());
  cfg.fir.delays = get_or<std::vector<int>>(fir, "delays", cfg.fir.delays);
  cfg.fir.tr_seconds = cfg.tr_seconds;
  for (std::size_t i = 0; i < cfg.fir.delays.size(); ++i)
    if (cfg.fir.delays[i] < 0 || (i > 0 && cfg.fir.delays[i] <= cfg.fir.delays[i - 1]))
      throw Error("temporal.fir.delays must be non-negative and strictly increasing");
  if (cfg.fir.delays.empty()) throw Error("temporal.fir.delays is empty");

  const json enc = config.value("encoding", json::object());
  cfg.encoding.folds = get_or<int>(enc, "folds", 4);
  cfg.encoding.lambda_grid = get_or<std::vector<double>>(enc, "lambda_grid", cfg.encoding.lambda_grid);
  cfg.encoding.inner_validation_fraction = get_or<double>(enc, "inner_validation_fraction", 0.25);
  const std::string zs = get_or<std::string>(enc, "zscore", "per_split");
  if (zs == "per_split") cfg.encoding.zscore = encoding::ZscoreMode::per_split;
  else if (zs == "train_statistics") cfg.encoding.zscore = encoding::ZscoreMode::train_statistics;
  else throw Error("encoding.zscore must be per_split or train_statistics");
  for (const auto& b : enc.value("bands", json::array())) {
    const auto pair = b.get<std::vector<std::size_t>>();
    if (pair.size() != 2) throw Error("encoding.bands entries are [begin, end)");
    cfg.encoding.band_spans.push_back({pair[0], pair[1]});
  }
  if (cfg.encoding.folds < 2) throw Error("encoding.folds must be >= 2");
  if (cfg.encoding.lambda_grid.empty()) throw Error("encoding.lambda_grid is empty");
  for (double l : cfg.encoding.lambda_grid)
    if (!(l > 0.0)) throw Error("encoding.lambda_grid entries must be positive");
  if (!(cfg.encoding.inner_validation_fraction > 0.0 && cfg.encoding.inner_validation_fraction < 1.0))
    throw Error("encoding.inner_validation_fraction must lie in (0, 1)");

  cfg.q = get_or<double>(config.value("stats", json::object()), "q", 0.05);
  if (!(cfg.q > 0.0 && cfg.q < 1.0)) throw Error("stats.q must lie in (0, 1)");
  return cfg;
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json config;
  try {
    config = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed config JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(config, o);
  return parse_config(config, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

namespace {

std::string hex(const unsigned char* data, unsigned len) {
  std::ostringstream s;
  for (unsigned i = 0; i < len; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(data[i]);
  return s.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 unavailable");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx_, data, len); }
  std::string finish() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned len = 0;
    EVP_DigestFinal_ex(ctx_, md, &len);
    return hex(md, len);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.finish();
}

std::string sha256_text(const std::string& text) {
  Sha256 h;
  h.update(text.data(), text.size());
  return h.finish();
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

namespace {

std::string layer_dir(int layer) {
  std::ostringstream s;
  s << "layer_" << std::setw(2) << std::setfill('0') << layer;
  return s.str();
}

std::string condition_file(const std::string& condition) {
  std::string out = condition;
  std::replace(out.begin(), out.end(), ':', '_');
  return out + ".fmat";
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("CSV column missing: " + name);
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw Error("empty CSV " + path.string());
  t.header = split(strip_cr(line), ',');
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    t.rows.push_back(split(line, ','));
    if (t.rows.back().size() != t.header.size()) throw Error("ragged CSV row in " + path.string());
  }
  return t;
}

double parse_cell(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  return parse_double(s, "CSV value");
}

/// In-memory view of the configured inputs.
struct Inputs {
  const PipelineConfig& cfg;
  LabelTable labels;
  std::vector<std::string> tasks;  // tasks being removed
  std::vector<int> layers;

  explicit Inputs(const PipelineConfig& c) : cfg(c) {
    labels = load_labels(c.labels_path);
    tasks = c.removal.tasks.empty() ? labels.task_names : c.removal.tasks;
    for (const auto& t : tasks) labels.task_column(t);
    for (const auto& p : c.feature_paths) layers.push_back(read_matrix_header(p).layer);
  }

  std::vector<std::string> removal_conditions() const {
    std::vector<std::string> out;
    for (const auto& t : tasks) out.push_back(after_condition(t));
    if (cfg.removal.include_all) out.emplace_back(kAfterAll);
    if (cfg.removal.random_baseline) out.emplace_back(kRandom);
    return out;
  }

  std::vector<std::string> all_conditions() const {
    std::vector<std::string> out{kBefore};
    for (auto& c : removal_conditions()) out.push_back(c);
    return out;
  }

  FeatureMatrix layer_features(std::size_t i) const { return load_features(cfg.feature_paths[i]); }

  LabelList random_labels() const {
    return annotation::random_property_labels(labels.words(), cfg.removal.random_classes,
                                              derive_seed(cfg.seed, "random_property"));
  }
};

void log(const RunOptions& opts, const std::string& msg) {
  if (!opts.quiet) std::cerr << "[lingscrub] " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Stage bodies
// ---------------------------------------------------------------------------

bool stage_validate(const PipelineConfig& cfg, const fs::path& dir) {
  std::vector<MatrixHeader> headers;
  for (const auto& p : cfg.feature_paths) headers.push_back(read_matrix_header(p));
  const LabelTable labels = load_labels(cfg.labels_path);
  const WordTimeline timeline = load_timeline(cfg.timeline_path);
  std::vector<ResponseShape> shapes;
  for (const auto& [id, p] : cfg.response_paths) {
    const auto h = read_matrix_header(p);
    shapes.push_back({id, h.rows, h.cols, cfg.tr_seconds});
  }
  ValidationReport report = validate_dataset(headers, labels, timeline, shapes);
  const AtlasMap atlas = load_atlas(cfg.atlas_path, cfg.rois_path);
  if (!shapes.empty() && atlas.voxel_to_parcel.size() != shapes.front().voxels)
    report.issues.push_back("atlas voxel count " + std::to_string(atlas.voxel_to_parcel.size()) + " vs responses " +
                            std::to_string(shapes.front().voxels));
  for (const auto& t : cfg.removal.tasks)
    if (std::find(labels.task_names.begin(), labels.task_names.end(), t) == labels.task_names.end())
      report.issues.push_back("unknown removal task " + t);

  ordered_json out;
  out["ok"] = report.ok();
  out["issues"] = report.issues;
  out["layers"] = headers.size();
  out["words"] = headers.empty() ? 0 : headers.front().rows;
  out["dims"] = headers.empty() ? 0 : headers.front().cols;
  out["tasks"] = labels.task_names;
  out["subjects"] = shapes.size();
  out["trs"] = shapes.empty() ? 0 : shapes.front().trs;
  out["voxels"] = shapes.empty() ? 0 : shapes.front().voxels;
  std::ofstream(dir / "report.json") << out.dump(2) << '\n';
  return report.ok();
}

void stage_remove(const PipelineConfig& cfg, const fs::path& dir) {
  const Inputs in(cfg);
  const auto random = in.random_labels();
  {
    std::ofstream out(dir / "random_labels.tsv");
    out << "word_index\trandom\n";
    for (std::size_t w = 0; w < random.size(); ++w) out << w << '\t' << random[w] << '\n';
  }
  Eigen::MatrixXi joint(static_cast<Eigen::Index>(in.labels.words()), static_cast<Eigen::Index>(in.tasks.size()));
  for (std::size_t t = 0; t < in.tasks.size(); ++t) {
    const auto col = in.labels.column(in.labels.task_column(in.tasks[t]));
    for (std::size_t w = 0; w < col.size(); ++w) joint(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(t)) = col[w];
  }

  parallel_for(cfg.feature_paths.size(), [&](std::size_t i) {
    const FeatureMatrix W = in.layer_features(i);
    const fs::path ldir = dir / layer_dir(W.layer_index);
    fs::create_directories(ldir);

    auto write = [&](const std::string& condition, const FeatureMatrix& residual, ordered_json sidecar) {
      save_matrix(residual, ldir / condition_file(condition));
      std::ofstream(ldir / (condition_file(condition).substr(0, condition_file(condition).size() - 5) + ".json"))
          << sidecar.dump(2) << '\n';
    };
    auto remove_one = [&](const std::string& condition, const std::string& task, const LabelList& labels) {
      if (cfg.removal.method == "inlp") {
        removal::InlpOptions opts;
        opts.iterations = cfg.removal.inlp_iterations;
        const auto res = removal::inlp_remove(W, labels, opts);
        ordered_json side{{"task", task}, {"method", "inlp"}, {"iterations", opts.iterations},
                          {"removed_rank", res.removed_directions.cols()}};
        write(condition, res.projected, side);
        return;
      }
      const auto model = removal::fit_property_regressor(labels, W, cfg.removal.lambda, cfg.removal.encoding);
      const auto res = removal::residualize(W, labels, model);
      Eigen::MatrixXi col(static_cast<Eigen::Index>(labels.size()), 1);
      for (std::size_t w = 0; w < labels.size(); ++w) col(static_cast<Eigen::Index>(w), 0) = labels[w];
      const double identity = removal::identity_residual(
          removal::design_matrix(col, model.encoding, model.class_counts), res.residuals.values, model);
      ordered_json side{{"task", task}, {"lambda", cfg.removal.lambda}, {"encoding", removal::to_string(cfg.removal.encoding)},
                        {"identity_residual_norm", identity}};
      write(condition, res.residuals, side);
    };

    for (const auto& task : in.tasks) remove_one(after_condition(task), task, in.labels.column(in.labels.task_column(task)));
    if (cfg.removal.include_all) {
      // Joint removal always uses the stacked ridge fit.
      const auto res = removal::remove_multiple(W, joint, cfg.removal.lambda, cfg.removal.encoding);
      const double identity = removal::identity_residual(
          removal::design_matrix(joint, res.remover.encoding, res.remover.class_counts), res.residuals.values, res.remover);
      ordered_json side{{"task", "all"}, {"tasks", in.tasks}, {"lambda", cfg.removal.lambda},
                        {"encoding", removal::to_string(cfg.removal.encoding)}, {"identity_residual_norm", identity}};
      write(kAfterAll, res.residuals, side);
    }
    if (cfg.removal.random_baseline) remove_one(kRandom, "random", random);
  });
}

void stage_probe(const PipelineConfig& cfg, const fs::path& dir) {
  const Inputs in(cfg);
  const auto random = in.random_labels();
  const WordTimeline timeline = load_timeline(cfg.timeline_path);
  std::vector<std::vector<ProbeRow>> per_layer(cfg.feature_paths.size());
  parallel_for(cfg.feature_paths.size(), [&](std::size_t i) {
    per_layer[i] = probe_layer(in.layer_features(i), in.labels, in.tasks, random, cfg.removal, cfg.probe,
                               timeline.sentence_index);
  });

  std::ofstream out(dir / "probing.csv");
  out << "layer,task,condition,accuracy,chance\n";
  for (std::size_t i = 0; i < per_layer.size(); ++i)
    for (const auto& r : per_layer[i])
      out << in.layers[i] << ',' << r.task << ',' << r.condition << ',' << format_real(r.accuracy) << ','
          << format_real(r.chance) << '\n';
}

void stage_align(const PipelineConfig& cfg, const fs::path& dir) {
  const Inputs in(cfg);
  const WordTimeline timeline = load_timeline(cfg.timeline_path);
  const std::size_t trs = read_matrix_header(cfg.response_paths.front().second).rows;
  const fs::path removed = cfg.output_dir / "remove";
  const auto conditions = in.all_conditions();
  const std::size_t jobs = cfg.feature_paths.size() * conditions.size();
  parallel_for(jobs, [&](std::size_t job) {
    const std::size_t i = job / conditions.size();
    const std::string& condition = conditions[job % conditions.size()];
    const int layer = in.layers[i];
    const FeatureMatrix words = condition == kBefore
                                    ? in.layer_features(i)
                                    : load_features(removed / layer_dir(layer) / condition_file(condition));
    auto down = temporal::lanczos_downsample(words, timeline, trs, cfg.tr_seconds, cfg.lanczos);
    FeatureMatrix expanded = temporal::fir_expand(down.features, cfg.fir);
    expanded.values = temporal::zscore_columns(expanded.values).values;
    expanded.layer_index = layer;
    const fs::path ldir = dir / layer_dir(layer);
    fs::create_directories(ldir);
    save_matrix(expanded, ldir / condition_file(condition));
  });
}

void stage_encode(const PipelineConfig& cfg, const fs::path& dir) {
  const Inputs in(cfg);
  std::vector<ResponseMatrix> subjects;
  for (const auto& [id, p] : cfg.response_paths) subjects.push_back(load_responses(p, id, cfg.tr_seconds));
  const auto conditions = in.all_conditions();
  const fs::path aligned = cfg.output_dir / "align";
  const std::size_t jobs = cfg.feature_paths.size() * conditions.size();
  std::vector<std::vector<encoding::AlignmentResult>> results(jobs);
  parallel_for(jobs, [&](std::size_t job) {
    const int layer = in.layers[job / conditions.size()];
    const std::string& condition = conditions[job % conditions.size()];
    const Matrix X = load_features(aligned / layer_dir(layer) / condition_file(condition)).values;
    results[job] = encoding::cross_validated_alignment(X, subjects, cfg.encoding);
    for (auto& r : results[job]) r.condition = condition;
  });

  std::ofstream voxels(dir / "alignment.csv");
  std::ofstream summary(dir / "summary.csv");
  voxels << "subject,layer,condition,voxel,r\n";
  summary << "subject,layer,condition,mean_r,undefined_voxels,chosen_lambda\n";
  ordered_json js = ordered_json::array();
  for (std::size_t s = 0; s < subjects.size(); ++s)
    for (std::size_t job = 0; job < jobs; ++job) {
      const int layer = in.layers[job / conditions.size()];
      const auto& r = results[job][s];
      for (Eigen::Index v = 0; v < r.per_voxel_r.size(); ++v)
        voxels << r.subject_id << ',' << layer << ',' << r.condition << ',' << v << ',' << format_real(r.per_voxel_r(v)) << '\n';
      std::string lambdas;
      for (double l : r.chosen_lambda) lambdas += (lambdas.empty() ? "" : ";") + format_real(l);
      summary << r.subject_id << ',' << layer << ',' << r.condition << ',' << format_real(r.per_subject_mean) << ','
              << r.undefined_voxels << ',' << lambdas << '\n';
      js.push_back({{"subject", r.subject_id}, {"layer", layer}, {"condition", r.condition},
                    {"mean_r", r.per_subject_mean}, {"chosen_lambdas", r.chosen_lambda},
                    {"fold_lambdas", r.fold_lambdas}, {"undefined_voxels", r.undefined_voxels}});
    }
  std::ofstream(dir / "summary.json") << js.dump(2) << '\n';
}

void write_significance(const stats::SignificanceReport& report, const fs::path& path) {
  std::ofstream out(path);
  out << "condition,layer,mean_before,mean_after,t,df,p,reject\n";
  for (const auto& r : report.rows)
    out << r.condition << ',' << r.layer << ',' << format_real(r.mean_before) << ',' << format_real(r.mean_after) << ','
        << format_real(r.test.t) << ',' << r.test.df << ',' << format_real(r.test.p) << ',' << (r.reject ? 1 : 0) << '\n';
}

void stage_stats(const PipelineConfig& cfg, const fs::path& dir) {
  const CsvTable t = read_csv(cfg.output_dir / "encode" / "summary.csv");
  const auto c_subject = t.column("subject"), c_layer = t.column("layer"), c_cond = t.column("condition"),
             c_mean = t.column("mean_r");
  std::vector<std::string> subjects, conditions;
  std::vector<int> layers;
  std::map<std::tuple<std::string, std::string, int>, double> value;
  for (const auto& row : t.rows) {
    const int layer = static_cast<int>(parse_int(row[c_layer], "layer"));
    if (std::find(subjects.begin(), subjects.end(), row[c_subject]) == subjects.end()) subjects.push_back(row[c_subject]);
    if (std::find(conditions.begin(), conditions.end(), row[c_cond]) == conditions.end()) conditions.push_back(row[c_cond]);
    if (std::find(layers.begin(), layers.end(), layer) == layers.end()) layers.push_back(layer);
    value[{row[c_cond], row[c_subject], layer}] = parse_cell(row[c_mean]);
  }
  auto scores = [&](const std::string& condition) {
    stats::ConditionScores s;
    s.condition = condition;
    s.subject_ids = subjects;
    s.layers = layers;
    s.subject_layer_mean = Matrix(static_cast<Eigen::Index>(subjects.size()), static_cast<Eigen::Index>(layers.size()));
    for (std::size_t i = 0; i < subjects.size(); ++i)
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto it = value.find({condition, subjects[i], layers[l]});
        if (it == value.end()) throw Error("mismatched subject sets: " + subjects[i] + " lacks " + condition);
        s.subject_layer_mean(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = it->second;
      }
    return s;
  };
  std::vector<stats::ConditionScores> after;
  for (const auto& c : conditions)
    if (c != kBefore) after.push_back(scores(c));
  write_significance(stats::significance_report(scores(kBefore), after, cfg.q), dir / "significance.csv");
}

std::vector<std::string> roi_order(const AtlasMap& atlas) {
  static const std::vector<std::string> preferred{"AG", "ATL", "PTL", "IFG", "IFGOrb", "MFG", "PCC", "dmPFC"};
  std::vector<std::string> out;
  for (const auto& r : preferred)
    if (atlas.roi_groups.count(r)) out.push_back(r);
  for (const auto& [r, _] : atlas.roi_groups)
    if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
  return out;
}

void stage_trend(const PipelineConfig& cfg, const fs::path& dir) {
  const Inputs in(cfg);
  const AtlasMap atlas = load_atlas(cfg.atlas_path, cfg.rois_path);
  const std::size_t V = atlas.voxel_to_parcel.size();
  const std::size_t L = in.layers.size();
  std::map<int, std::size_t> layer_pos;
  for (std::size_t l = 0; l < L; ++l) layer_pos[in.layers[l]] = l;

  // Probing accuracy per (task, condition), indexed by layer.
  std::map<std::pair<std::string, std::string>, Vector> accuracy;
  {
    const CsvTable t = read_csv(cfg.output_dir / "probe" / "probing.csv");
    const auto c_layer = t.column("layer"), c_task = t.column("task"), c_cond = t.column("condition"), c_acc = t.column("accuracy");
    for (const auto& row : t.rows) {
      auto& v = accuracy[{row[c_task], row[c_cond]}];
      if (v.size() == 0) v = Vector::Constant(static_cast<Eigen::Index>(L), std::numeric_limits<double>::quiet_NaN());
      v(static_cast<Eigen::Index>(layer_pos.at(static_cast<int>(parse_int(row[c_layer], "layer"))))) = parse_cell(row[c_acc]);
    }
  }

  // Subject-averaged voxel correlations per condition: layers x voxels.
  std::map<std::string, Matrix> sums;
  std::map<std::string, Matrix> counts;
  {
    const CsvTable t = read_csv(cfg.output_dir / "encode" / "alignment.csv");
    const auto c_layer = t.column("layer"), c_cond = t.column("condition"), c_vox = t.column("voxel"), c_r = t.column("r");
    for (const auto& row : t.rows) {
      auto& s = sums[row[c_cond]];
      auto& n = counts[row[c_cond]];
      if (s.size() == 0) {
        s = Matrix::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(V));
        n = Matrix::Zero(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(V));
      }
      const double r = parse_cell(row[c_r]);
      if (std::isnan(r)) continue;
      const auto l = static_cast<Eigen::Index>(layer_pos.at(static_cast<int>(parse_int(row[c_layer], "layer"))));
      const auto v = static_cast<Eigen::Index>(parse_int(row[c_vox], "voxel"));
      if (v >= static_cast<Eigen::Index>(V)) throw Error("alignment voxel outside atlas");
      s(l, v) += r;
      n(l, v) += 1.0;
    }
  }
  auto mean_map = [&](const std::string& condition) {
    if (!sums.count(condition)) throw Error("encode outputs lack condition " + condition);
    Matrix m = sums[condition].array() / counts[condition].array();  // 0/0 -> NaN marks undefined voxels
    return m;
  };
  const Matrix before = mean_map(kBefore);
  const auto rois = roi_order(atlas);
  std::vector<std::string> parcels;
  for (const auto& r : rois)
    for (const auto& p : atlas.roi_groups.at(r))
      if (std::find(parcels.begin(), parcels.end(), p) == parcels.end() && !atlas.voxels_in_parcel(p).empty())
        parcels.push_back(p);

  std::ofstream roi_csv(dir / "trend_roi.csv");
  std::ofstream sub_csv(dir / "trend_subroi.csv");
  std::ofstream vox_csv(dir / "voxel_trend.csv");
  roi_csv << "task";
  for (const auto& r : rois) roi_csv << ',' << r;
  roi_csv << ",whole_brain\n";
  sub_csv << "task";
  for (const auto& p : parcels) sub_csv << ',' << p;
  sub_csv << '\n';
  vox_csv << "voxel,parcel,task,r\n";

  for (const auto& task : in.tasks) {
    const auto& acc_before = accuracy.at({task, "before"});
    const auto& acc_after = accuracy.at({task, "after"});
    const Vector delta_decode = acc_before - acc_after;
    const Matrix delta = before - mean_map(after_condition(task));  // layers x voxels

    auto trend_of = [&](auto&& aggregate) {
      Vector series(static_cast<Eigen::Index>(L));
      for (std::size_t l = 0; l < L; ++l) {
        try {
          series(static_cast<Eigen::Index>(l)) = aggregate(Vector(delta.row(static_cast<Eigen::Index>(l)).transpose()));
        } catch (const Error&) {
          return std::numeric_limits<double>::quiet_NaN();
        }
      }
      return stats::layer_trend_correlation({delta_decode, series});
    };

    roi_csv << task;
    for (const auto& r : rois)
      roi_csv << ',' << format_real(trend_of([&](const Vector& v) { return stats::roi_aggregate(v, atlas, r); }));
    roi_csv << ',' << format_real(trend_of([](const Vector& v) {
      const double m = encoding::nan_mean(v);
      if (std::isnan(m)) throw Error("no defined voxels");
      return m;
    })) << '\n';

    sub_csv << task;
    for (const auto& p : parcels)
      sub_csv << ',' << format_real(trend_of([&](const Vector& v) { return stats::parcel_aggregate(v, atlas, p); }));
    sub_csv << '\n';

    const Vector voxel_r = stats::voxel_trend_map(delta_decode, delta);
    for (std::size_t v = 0; v < V; ++v)
      vox_csv << v << ',' << atlas.voxel_to_parcel[v] << ',' << task << ',' << format_real(voxel_r(static_cast<Eigen::Index>(v))) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

std::vector<Stage> upstream_of(Stage s) {
  switch (s) {
    case Stage::validate: return {};
    case Stage::remove: return {Stage::validate};
    case Stage::probe: return {Stage::validate};
    case Stage::align: return {Stage::validate, Stage::remove};
    case Stage::encode: return {Stage::validate, Stage::align};
    case Stage::stats: return {Stage::encode};
    case Stage::trend: return {Stage::validate, Stage::probe, Stage::encode, Stage::stats};
  }
  return {};
}

json stage_parameters(const PipelineConfig& cfg, Stage s) {
  const json& raw = cfg.raw;
  switch (s) {
    case Stage::validate: return {{"paths", raw.value("paths", json::object())}, {"tr_seconds", cfg.tr_seconds}};
    case Stage::remove: return {{"removal", raw.value("removal", json::object())}, {"seed", cfg.seed}};
    case Stage::probe: return {{"probe", raw.value("probe", json::object())}, {"removal", raw.value("removal", json::object())}, {"seed", cfg.seed}};
    case Stage::align: return {{"temporal", raw.value("temporal", json::object())}, {"tr_seconds", cfg.tr_seconds}};
    case Stage::encode: return {{"encoding", raw.value("encoding", json::object())}};
    case Stage::stats: return {{"q", cfg.q}};
    case Stage::trend: return json::object();
  }
  return json::object();
}

std::string inputs_hash(const PipelineConfig& cfg, Stage s) {
  json payload;
  payload["stage"] = stage_name(s);
  payload["version"] = kVersion;
  payload["parameters"] = stage_parameters(cfg, s);
  json upstream = json::object();
  for (Stage u : upstream_of(s)) {
    const fs::path m = cfg.output_dir / stage_name(u) / "manifest.json";
    if (!fs::exists(m)) throw Error("missing upstream stage outputs: " + stage_name(u));
    upstream[stage_name(u)] = json::parse(std::ifstream(m))["digest"];
  }
  payload["upstream"] = upstream;
  if (s == Stage::validate) {
    json files = json::array();
    auto add = [&](const fs::path& p) {
      if (!p.empty()) files.push_back({p.filename().string(), sha256_file(p)});
    };
    for (const auto& p : cfg.feature_paths) add(p);
    add(cfg.labels_path);
    add(cfg.timeline_path);
    for (const auto& [_, p] : cfg.response_paths) add(p);
    add(cfg.atlas_path);
    add(cfg.rois_path);
    payload["files"] = files;
  }
  return sha256_text(payload.dump());
}

ordered_json hash_outputs(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  ordered_json out = ordered_json::object();
  for (const auto& f : files) out[fs::relative(f, dir).generic_string()] = sha256_file(f);
  return out;
}

bool manifest_matches(const fs::path& dir, const std::string& hash) {
  const fs::path m = dir / "manifest.json";
  if (!fs::exists(m)) return false;
  json manifest;
  try {
    manifest = json::parse(std::ifstream(m));
  } catch (const json::exception&) {
    return false;
  }
  if (manifest.value("inputs_hash", "") != hash) return false;
  const auto actual = hash_outputs(dir);
  return json(actual) == manifest.value("outputs", json::object());
}

void write_manifest(const PipelineConfig& cfg, Stage s, const fs::path& dir, const std::string& hash) {
  ordered_json m;
  m["stage"] = stage_name(s);
  m["version"] = kVersion;
  m["parameters"] = stage_parameters(cfg, s);
  m["inputs_hash"] = hash;
  m["outputs"] = hash_outputs(dir);
  m["digest"] = sha256_text(hash + m["outputs"].dump());
  std::ofstream(dir / "manifest.json") << m.dump(2) << '\n';
}

}  // namespace

std::vector<ProbeRow> probe_layer(const FeatureMatrix& W, const LabelTable& labels, const std::vector<std::string>& tasks,
                                  const LabelList& random_labels, const RemovalSettings& removal_cfg,
                                  const ProbeSettings& probe_cfg, const std::vector<int>& sentence_index) {
  if (probe_cfg.split_by_sentence && sentence_index.size() != labels.words())
    throw Error("sentence index length does not match word count");
  const auto split = probe_cfg.split_by_sentence ? probing::grouped_split(sentence_index, probe_cfg.test_every)
                                                 : probing::interleaved_split(labels.words(), probe_cfg.test_every);
  std::vector<int> train_groups;
  if (probe_cfg.split_by_sentence)
    for (auto i : split.train) train_groups.push_back(sentence_index[i]);
  auto fit_probe = [&](const Matrix& X, const LabelList& y) {
    if (probe_cfg.l2) {
      probing::ProbeOptions o;
      o.l2 = probe_cfg.l2;
      return probing::train_probe(X, y, o);
    }
    return probing::train_probe_selected(X, y, train_groups, probe_cfg.l2_grid).model;
  };

  auto as_columns = [](const std::vector<LabelList>& cols) {
    Eigen::MatrixXi m(static_cast<Eigen::Index>(cols.front().size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (std::size_t r = 0; r < cols[c].size(); ++r) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cols[c][r];
    return m;
  };
  FeatureMatrix W_train = W;
  W_train.values = probing::take_rows(W.values, split.train);

  // Removers are fitted on the probe's training words only and then applied
  // to every word, so no held-out label information shapes the residuals.
  auto remove = [&](const std::vector<LabelList>& cols) -> Matrix {
    if (removal_cfg.method == "inlp" && cols.size() == 1) {
      removal::InlpOptions opts;
      opts.iterations = removal_cfg.inlp_iterations;
      const auto res = removal::inlp_remove(W_train, probing::take(cols.front(), split.train), opts);
      return W.values * res.projection;
    }
    std::vector<LabelList> train_cols;
    for (const auto& c : cols) train_cols.push_back(probing::take(c, split.train));
    const auto model = removal::fit_multiple(as_columns(train_cols), W_train, removal_cfg.lambda, removal_cfg.encoding);
    return removal::residualize_multiple(W, as_columns(cols), model).residuals.values;
  };

  std::map<std::string, std::pair<Matrix, Matrix>> splits;
  auto add = [&](const std::string& condition, const Matrix& m) {
    splits[condition] = {probing::take_rows(m, split.train), probing::take_rows(m, split.test)};
  };
  add(kBefore, W.values);
  std::vector<LabelList> all;
  for (const auto& t : tasks) {
    all.push_back(labels.column(labels.task_column(t)));
    add(after_condition(t), remove({all.back()}));
  }
  if (removal_cfg.include_all) add(kAfterAll, remove(all));
  if (removal_cfg.random_baseline) add(kRandom, remove({random_labels}));

  std::vector<ProbeRow> rows;
  for (const auto& task : tasks) {
    const auto y = labels.column(labels.task_column(task));
    const auto ytr = probing::take(y, split.train);
    const auto yte = probing::take(y, split.test);
    const double chance = annotation::majority_baseline(ytr, yte);
    auto probe = [&](const std::string& source, const std::string& label) {
      const auto& [Xtr, Xte] = splits.at(source);
      const auto model = fit_probe(Xtr, ytr);
      rows.push_back({task, label, probing::evaluate_probe(model, Xte, yte), chance});
    };
    probe(kBefore, "before");
    probe(after_condition(task), "after");
    for (const auto& other : tasks)
      if (other != task) probe(after_condition(other), "after_other:" + other);
    if (removal_cfg.include_all) probe(kAfterAll, kAfterAll);
    if (removal_cfg.random_baseline) probe(kRandom, kRandom);
  }
  return rows;
}

int run_pipeline(const PipelineConfig& cfg, const std::set<Stage>& stages, const RunOptions& opts) {
  try {
    for (Stage s : all_stages()) {
      if (!stages.count(s)) continue;
      const fs::path dir = cfg.output_dir / stage_name(s);
      const std::string hash = inputs_hash(cfg, s);
      if (!opts.force && manifest_matches(dir, hash)) {
        log(opts, stage_name(s) + ": up to date, skipped");
        continue;
      }
      log(opts, stage_name(s) + ": running");
      fs::remove_all(dir);
      fs::create_directories(dir);
      switch (s) {
        case Stage::validate:
          if (!stage_validate(cfg, dir)) {
            log(opts, "validate: dataset inconsistent, see " + (dir / "report.json").string());
            return validation_failure;
          }
          break;
        case Stage::remove: stage_remove(cfg, dir); break;
        case Stage::probe: stage_probe(cfg, dir); break;
        case Stage::align: stage_align(cfg, dir); break;
        case Stage::encode: stage_encode(cfg, dir); break;
        case Stage::stats: stage_stats(cfg, dir); break;
        case Stage::trend:
          stage_trend(cfg, dir);
          emit_report(cfg.output_dir);
          break;
      }
      write_manifest(cfg, s, dir, hash);
    }
  } catch (const NumericalError& e) {
    log(opts, std::string("numerical failure: ") + e.what());
    return numerical_failure;
  } catch (const std::exception& e) {
    log(opts, std::string("error: ") + e.what());
    return validation_failure;
  }
  return ok;
}

void emit_report(const fs::path& output_dir) {
  const fs::path report = output_dir / "report";
  for (const char* needed : {"probe/probing.csv", "stats/significance.csv", "trend/trend_roi.csv", "trend/voxel_trend.csv"})
    if (!fs::exists(output_dir / needed)) throw Error(std::string("incomplete upstream outputs: ") + needed);
  fs::create_directories(report);

  {
    const CsvTable t = read_csv(output_dir / "probe" / "probing.csv");
    const auto c_layer = t.column("layer"), c_task = t.column("task"), c_cond = t.column("condition"),
               c_acc = t.column("accuracy"), c_chance = t.column("chance");
    std::map<std::pair<long long, std::string>, std::map<std::string, std::string>> cells;
    std::vector<std::pair<long long, std::string>> order;
    for (const auto& row : t.rows) {
      const std::pair key{parse_int(row[c_layer], "layer"), row[c_task]};
      if (!cells.count(key)) order.push_back(key);
      cells[key][row[c_cond]] = row[c_acc];
      cells[key]["chance"] = row[c_chance];
    }
    std::ofstream out(report / "probing_table.csv");
    out << "layer,task,before,after,chance\n";
    for (const auto& key : order) {
      auto& c = cells[key];
      out << key.first << ',' << key.second << ',' << c["before"] << ',' << c["after"] << ',' << c["chance"] << '\n';
    }
  }
  {
    const CsvTable t = read_csv(output_dir / "stats" / "significance.csv");
    std::ofstream out(report / "alignment_by_layer.csv");
    out << "layer,condition,mean_before,mean_after,p,significant\n";
    const auto c_layer = t.column("layer"), c_cond = t.column("condition"), c_b = t.column("mean_before"),
               c_a = t.column("mean_after"), c_p = t.column("p"), c_rej = t.column("reject");
    for (const auto& row : t.rows)
      out << row[c_layer] << ',' << row[c_cond] << ',' << row[c_b] << ',' << row[c_a] << ',' << row[c_p] << ',' << row[c_rej] << '\n';
  }
  fs::copy_file(output_dir / "trend" / "trend_roi.csv", report / "trend_roi.csv", fs::copy_options::overwrite_existing);
  fs::copy_file(output_dir / "trend" / "voxel_trend.csv", report / "voxel_trend.csv", fs::copy_options::overwrite_existing);
}

}  // namespace lingscrub::pipeline

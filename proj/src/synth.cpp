#include "lingscrub/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lingscrub/rng.hpp"
#include "lingscrub/temporal.hpp"

namespace lingscrub::synth {

namespace {

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  // Fill row-major so the draw order does not depend on storage order.
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
  return m;
}

Matrix random_orthonormal(Rng& rng, Eigen::Index dims) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(rng, dims, dims));
  Matrix Q = qr.householderQ() * Matrix::Identity(dims, dims);
  // Fix column signs so the basis is a deterministic function of the draw.
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index c = 0; c < dims; ++c)
    if (R(c, c) < 0) Q.col(c) = -Q.col(c);
  return Q;
}

void standardise_columns(Matrix& m) {
  m.rowwise() -= m.colwise().mean();
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double sd = std::sqrt(m.col(c).squaredNorm() / static_cast<double>(m.rows()));
    if (sd > 0) m.col(c) /= sd;
  }
}

// Delayed response weights over 1..8 TRs, peaking around 5-6 s.
const std::vector<double>& hrf_weights() {
  static const std::vector<double> w{0.25, 0.7, 1.0, 0.8, 0.45, 0.2, 0.08, 0.03};
  return w;
}

}  // namespace

Matrix mid_peak_strength(int n_layers, std::size_t n_tasks, double base, double amplitude) {
  Matrix s(n_layers, static_cast<Eigen::Index>(n_tasks));
  for (int l = 0; l < n_layers; ++l) {
    const double x = n_layers > 1 ? static_cast<double>(l) / static_cast<double>(n_layers - 1) : 0.5;
    const double bump = std::sin(std::numbers::pi * x);
    s.row(l).setConstant(base + amplitude * bump);
  }
  return s;
}

SynthDataset generate_dataset(const SynthConfig& cfg) {
  const std::size_t tasks = cfg.task_names.size();
  if (cfg.n_words < 1 || cfg.dims < 1 || cfg.n_layers < 1 || tasks < 1 || cfg.n_subjects < 1 || cfg.trs < 2 || cfg.voxels < 1)
    throw Error("synth: all counts must be positive");
  if (cfg.class_counts.size() != tasks) throw Error("synth: one class count per task");
  for (int k : cfg.class_counts)
    if (k < 2) throw Error("synth: tasks need at least 2 classes");
  if (cfg.dims < tasks) throw Error("synth: need at least one dimension per task");
  if (cfg.min_sentence_words < 1 || cfg.max_sentence_words < cfg.min_sentence_words) throw Error("synth: bad sentence length range");
  if (cfg.brain_coupling < 0.0 || cfg.brain_coupling > 1.0) throw Error("synth: brain_coupling must lie in [0, 1]");
  if (cfg.shared_noise_share < 0.0 || cfg.shared_noise_share > 1.0) throw Error("synth: shared_noise_share must lie in [0, 1]");

  const Matrix strength = cfg.signal_strength.size() ? cfg.signal_strength : mid_peak_strength(cfg.n_layers, tasks);
  if (strength.rows() != cfg.n_layers || strength.cols() != static_cast<Eigen::Index>(tasks))
    throw Error("synth: signal_strength must be layers x tasks");
  if (strength.minCoeff() < 0.0) throw Error("synth: signal_strength must be non-negative");

  const auto N = static_cast<Eigen::Index>(cfg.n_words);
  const auto D = static_cast<Eigen::Index>(cfg.dims);
  const auto T = static_cast<Eigen::Index>(tasks);
  const auto Q = static_cast<Eigen::Index>(std::min(cfg.latent_dims, cfg.dims - tasks));

  SynthDataset out;

  // Sentences and per-sentence labels.
  Rng sentence_rng(derive_seed(cfg.seed, "sentences"));
  std::vector<int> sentence_of_word;
  int sentences = 0;
  while (sentence_of_word.size() < cfg.n_words) {
    const int span = cfg.max_sentence_words - cfg.min_sentence_words + 1;
    const int len = cfg.min_sentence_words + static_cast<int>(sentence_rng.index(static_cast<std::uint64_t>(span)));
    for (int i = 0; i < len && sentence_of_word.size() < cfg.n_words; ++i) sentence_of_word.push_back(sentences);
    ++sentences;
  }
  Rng label_rng(derive_seed(cfg.seed, "labels"));
  Eigen::MatrixXi sentence_labels(sentences, T);
  for (int s = 0; s < sentences; ++s)
    for (Eigen::Index t = 0; t < T; ++t)
      sentence_labels(s, t) = static_cast<int>(label_rng.index(static_cast<std::uint64_t>(cfg.class_counts[static_cast<std::size_t>(t)])));
  // Tiny datasets may miss a class; pin class c to sentence c so every class occurs.
  for (Eigen::Index t = 0; t < T; ++t) {
    const int k = cfg.class_counts[static_cast<std::size_t>(t)];
    for (int c = 0; c < k; ++c)
      if ((sentence_labels.col(t).array() == c).count() == 0) {
        if (c >= sentences) throw Error("synth: too few sentences for the class counts");
        sentence_labels(c, t) = c;
      }
  }
  Eigen::MatrixXi word_labels(N, T);
  for (Eigen::Index w = 0; w < N; ++w) word_labels.row(w) = sentence_labels.row(sentence_of_word[static_cast<std::size_t>(w)]);
  out.labels = make_label_table(cfg.task_names, word_labels);

  out.timeline = uniform_timeline(cfg.n_words, cfg.trs, cfg.tr_seconds);
  out.timeline.sentence_index = sentence_of_word;

  // Sentence-level latent content plus per-word variation.
  Rng latent_rng(derive_seed(cfg.seed, "latent"));
  const Matrix sentence_latent = gaussian(latent_rng, sentences, std::max<Eigen::Index>(Q, 1));
  Matrix latent = 0.5 * gaussian(latent_rng, N, std::max<Eigen::Index>(Q, 1));
  for (Eigen::Index w = 0; w < N; ++w) latent.row(w) += sentence_latent.row(sentence_of_word[static_cast<std::size_t>(w)]);

  const Matrix L = word_labels.cast<double>();
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    Rng layer_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(layer)));
    const Matrix basis = random_orthonormal(layer_rng, D);
    const Matrix dirs = basis.leftCols(T);
    FeatureMatrix f;
    f.layer_index = layer + 1;
    f.unit_kind = UnitKind::word;
    f.values = L * strength.row(layer).transpose().asDiagonal() * dirs.transpose();
    if (Q > 0) f.values += cfg.latent_scale * latent * basis.middleCols(T, Q).transpose();
    f.values += cfg.noise_sd * gaussian(layer_rng, N, D);
    out.features.push_back(std::move(f));
    out.directions.push_back(dirs);
  }

  // Brain responses: property and latent drives mixed by coupling, downsampled,
  // delayed through a fixed response shape, plus noise.
  Matrix label_z = L;
  standardise_columns(label_z);
  const auto V = static_cast<Eigen::Index>(cfg.voxels);
  const auto& hrf = hrf_weights();
  for (std::size_t s = 0; s < cfg.n_subjects; ++s) {
    Rng subj_rng(derive_seed(cfg.seed, 5000 + static_cast<std::uint64_t>(s)));
    Matrix prop = label_z * gaussian(subj_rng, T, V);
    Matrix lat = latent * gaussian(subj_rng, latent.cols(), V);
    standardise_columns(prop);
    standardise_columns(lat);
    FeatureMatrix drive;
    drive.values = std::sqrt(cfg.brain_coupling) * prop + std::sqrt(1.0 - cfg.brain_coupling) * lat;
    const auto tr_drive = temporal::lanczos_downsample(drive, out.timeline, cfg.trs, cfg.tr_seconds).features.values;
    Matrix signal = Matrix::Zero(static_cast<Eigen::Index>(cfg.trs), V);
    for (std::size_t k = 0; k < hrf.size(); ++k) {
      const auto d = static_cast<Eigen::Index>(k + 1);
      if (d >= signal.rows()) break;
      signal.bottomRows(signal.rows() - d) += hrf[k] * tr_drive.topRows(signal.rows() - d);
    }
    standardise_columns(signal);
    ResponseMatrix r;
    std::ostringstream id;
    id << std::setw(2) << std::setfill('0') << (s + 1);
    r.subject_id = id.str();
    r.tr_seconds = cfg.tr_seconds;
    const auto n = static_cast<Eigen::Index>(cfg.trs);
    const Matrix global = gaussian(subj_rng, n, 1) * gaussian(subj_rng, 1, V);  // per-voxel loadings
    r.values = signal + cfg.response_noise_sd * (std::sqrt(cfg.shared_noise_share) * global +
                                                 std::sqrt(1.0 - cfg.shared_noise_share) * gaussian(subj_rng, n, V));
    out.responses.push_back(std::move(r));
  }

  std::vector<std::string> parcels;
  for (const auto& [_, ps] : default_roi_groups()) parcels.insert(parcels.end(), ps.begin(), ps.end());
  for (const char* other : {"V1", "V2", "V3", "V4"}) parcels.emplace_back(other);
  std::vector<std::string> voxel_parcels;
  for (std::size_t v = 0; v < cfg.voxels; ++v) voxel_parcels.push_back(parcels[v % parcels.size()]);
  out.atlas = make_atlas(std::move(voxel_parcels));
  return out;
}

void write_dataset(const SynthDataset& data, const SynthConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::ordered_json features = nlohmann::ordered_json::array();
  for (const auto& f : data.features) {
    std::ostringstream name;
    name << "layer_" << std::setw(2) << std::setfill('0') << f.layer_index << ".fmat";
    save_matrix(f, dir / name.str());
    features.push_back(name.str());
  }
  nlohmann::ordered_json responses = nlohmann::ordered_json::array();
  for (const auto& r : data.responses) {
    const std::string name = "sub-" + r.subject_id + ".fmat";
    save_matrix(r, dir / name);
    responses.push_back({{"subject", r.subject_id}, {"path", name}});
  }
  save_labels(data.labels, dir / "labels.tsv");
  save_timeline(data.timeline, dir / "timeline.tsv");
  save_atlas_csv(data.atlas, dir / "atlas.csv");

  nlohmann::ordered_json config;
  config["seed"] = cfg.seed;
  config["output_dir"] = "out";
  config["tr_seconds"] = cfg.tr_seconds;
  config["paths"] = {{"features", features},
                     {"labels", "labels.tsv"},
                     {"timeline", "timeline.tsv"},
                     {"responses", responses},
                     {"atlas", "atlas.csv"},
                     {"rois", ""}};
  std::ofstream out(dir / "pipeline.json", std::ios::trunc);
  out << config.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

Matrix ols_residual_oracle(const Matrix& W, const LabelList& labels) {
  if (static_cast<std::size_t>(W.rows()) != labels.size()) throw Error("oracle: label count does not match rows");
  Matrix design(W.rows(), 2);
  for (Eigen::Index i = 0; i < W.rows(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = labels[static_cast<std::size_t>(i)];
  }
  Eigen::JacobiSVD<Matrix> svd(design, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-12 * std::max<double>(static_cast<double>(design.rows()), 2.0) * sv(0);
  Matrix pinv = Matrix::Zero(design.cols(), design.rows());
  for (Eigen::Index k = 0; k < sv.size(); ++k)
    if (sv(k) > tol) pinv += svd.matrixV().col(k) * svd.matrixU().col(k).transpose() / sv(k);
  Matrix out = W - design * (pinv * W);
  out.rowwise() += W.colwise().mean();  // removal keeps the feature means
  return out;
}

double naive_pearson_oracle(const std::vector<double>& y, const std::vector<double>& yhat) {
  const std::size_t n = y.size();
  double my = 0, mh = 0;
  for (std::size_t i = 0; i < n; ++i) {
    my += y[i];
    mh += yhat[i];
  }
  my /= static_cast<double>(n);
  mh /= static_cast<double>(n);
  double cov = 0, vy = 0, vh = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (y[i] - my) * (yhat[i] - mh);
    vy += (y[i] - my) * (y[i] - my);
    vh += (yhat[i] - mh) * (yhat[i] - mh);
  }
  return cov / std::sqrt(vy * vh);
}

std::vector<bool> naive_bh_oracle(const std::vector<double>& pvals, double q) {
  const std::size_t m = pvals.size();
  // Largest p that sits under its own step-up line; rank counts ties.
  double threshold = -1.0;
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t rank = 0;
    for (std::size_t i = 0; i < m; ++i) rank += pvals[i] <= pvals[j];
    if (pvals[j] <= static_cast<double>(rank) * q / static_cast<double>(m)) threshold = std::max(threshold, pvals[j]);
  }
  std::vector<bool> mask(m);
  for (std::size_t i = 0; i < m; ++i) mask[i] = pvals[i] <= threshold;
  return mask;
}

}  // namespace lingscrub::synth

#include "lingscrub/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "lingscrub/text.hpp"

namespace lingscrub {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// types.hpp helpers
// ---------------------------------------------------------------------------

std::size_t LabelTable::task_column(const std::string& name) const {
  auto it = std::find(task_names.begin(), task_names.end(), name);
  if (it == task_names.end()) throw Error("unknown task " + name);
  return static_cast<std::size_t>(it - task_names.begin());
}

LabelList LabelTable::column(std::size_t task) const {
  if (task >= tasks()) throw Error("task column out of range");
  LabelList out(words());
  for (std::size_t w = 0; w < out.size(); ++w) out[w] = labels(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(task));
  return out;
}

IndexList AtlasMap::voxels_in_parcel(const std::string& parcel) const {
  IndexList out;
  for (std::size_t v = 0; v < voxel_to_parcel.size(); ++v)
    if (voxel_to_parcel[v] == parcel) out.push_back(v);
  return out;
}

IndexList AtlasMap::voxels_in_roi(const std::string& roi) const {
  auto it = roi_groups.find(roi);
  if (it == roi_groups.end()) throw Error("unknown ROI " + roi);
  const std::set<std::string> parcels(it->second.begin(), it->second.end());
  IndexList out;
  for (std::size_t v = 0; v < voxel_to_parcel.size(); ++v)
    if (parcels.count(voxel_to_parcel[v])) out.push_back(v);
  return out;
}

const std::map<std::string, std::vector<std::string>>& default_roi_groups() {
  static const std::map<std::string, std::vector<std::string>> groups = {
      {"AG", {"PFm", "PGs", "PGi", "TPOJ2", "TPOJ3"}},
      {"ATL", {"STSda", "STSva", "STGa", "TE1a", "TE2a", "TGv", "TGd"}},
      {"PTL", {"A4", "A5", "STSdp", "STSvp", "PSL", "STV", "TPOJ1"}},
      {"IFG", {"44", "45", "IFJa", "IFSp"}},
      {"MFG", {"55b"}},
      {"IFGOrb", {"a47r", "p47r", "a9-46v"}},
      {"PCC", {"31pv", "31pd", "PCV", "7m", "23", "RSC"}},
      {"dmPFC", {"9m", "10d", "d32"}},
  };
  return groups;
}

void require_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      if (!std::isfinite(m(r, c)))
        throw Error(what + ": non-finite value at (" + std::to_string(r) + "," + std::to_string(c) + ")");
}

// ---------------------------------------------------------------------------
// .fmat
// ---------------------------------------------------------------------------

namespace {

const char* kind_name(UnitKind k) { return k == UnitKind::word ? "word" : "tr"; }

void write_fmat(const Matrix& values, const std::string& kind, int layer, const fs::path& path) {
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const double v = values(r, c);
      if (!std::isfinite(v) || !std::isfinite(static_cast<float>(v)))
        throw Error("non-finite value at (" + std::to_string(r) + "," + std::to_string(c) + ")");
    }

  ordered_json header;
  header["rows"] = values.rows();
  header["cols"] = values.cols();
  header["dtype"] = "f32";
  header["kind"] = kind;
  header["layer"] = layer;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  const std::string line = header.dump() + "\n";
  out.write(line.data(), static_cast<std::streamsize>(line.size()));

  std::vector<unsigned char> payload(static_cast<std::size_t>(values.size()) * 4);
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values(r, c)));
      for (int b = 0; b < 4; ++b) payload[at++] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFFu);
    }
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("write failed for " + path.string());
}

MatrixHeader parse_header(const std::string& line) {
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed header JSON: ") + e.what());
  }
  if (!h.is_object()) throw Error("malformed header JSON: not an object");
  for (const char* key : {"rows", "cols", "dtype", "kind", "layer"})
    if (!h.contains(key)) throw Error(std::string("malformed header JSON: missing ") + key);
  if (h["dtype"] != "f32") throw Error("unsupported dtype " + h["dtype"].dump());
  MatrixHeader out;
  try {
    out.rows = h["rows"].get<std::size_t>();
    out.cols = h["cols"].get<std::size_t>();
    out.kind = h["kind"].get<std::string>();
    out.layer = h["layer"].get<int>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed header JSON: ") + e.what());
  }
  if (out.kind != "word" && out.kind != "tr" && out.kind != "response")
    throw Error("malformed header JSON: unknown kind " + out.kind);
  return out;
}

struct RawMatrix {
  MatrixHeader header;
  Matrix values;
};

RawMatrix read_fmat(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("malformed header JSON: empty file");
  RawMatrix raw{parse_header(line), {}};

  const std::size_t expected = raw.header.rows * raw.header.cols * 4;
  std::vector<unsigned char> payload(expected);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(expected));
  if (static_cast<std::size_t>(in.gcount()) != expected)
    throw Error("truncated payload in " + path.string());
  if (in.peek() != std::ifstream::traits_type::eof())
    throw Error("payload longer than header dimensions in " + path.string());

  raw.values.resize(static_cast<Eigen::Index>(raw.header.rows), static_cast<Eigen::Index>(raw.header.cols));
  std::size_t at = 0;
  for (Eigen::Index r = 0; r < raw.values.rows(); ++r)
    for (Eigen::Index c = 0; c < raw.values.cols(); ++c) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(payload[at++]) << (8 * b);
      raw.values(r, c) = static_cast<double>(std::bit_cast<float>(bits));
    }
  return raw;
}

}  // namespace

void save_matrix(const FeatureMatrix& m, const fs::path& path) {
  write_fmat(m.values, kind_name(m.unit_kind), m.layer_index, path);
}

void save_matrix(const ResponseMatrix& m, const fs::path& path) {
  write_fmat(m.values, "response", 0, path);
}

MatrixHeader read_matrix_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("malformed header JSON: empty file");
  return parse_header(line);
}

LoadedMatrix load_matrix(const fs::path& path) {
  RawMatrix raw = read_fmat(path);
  if (raw.header.kind == "response") {
    ResponseMatrix m;
    m.values = std::move(raw.values);
    m.subject_id = path.stem().string();
    return m;
  }
  FeatureMatrix m;
  m.values = std::move(raw.values);
  m.layer_index = raw.header.layer;
  m.unit_kind = raw.header.kind == "word" ? UnitKind::word : UnitKind::tr;
  return m;
}

FeatureMatrix load_features(const fs::path& path) {
  auto loaded = load_matrix(path);
  if (auto* f = std::get_if<FeatureMatrix>(&loaded)) return std::move(*f);
  // A response file used as features (e.g. for a regressor) keeps its values.
  FeatureMatrix f;
  f.values = std::move(std::get<ResponseMatrix>(loaded).values);
  f.unit_kind = UnitKind::tr;
  return f;
}

ResponseMatrix load_responses(const fs::path& path, const std::string& subject_id, double tr_seconds) {
  RawMatrix raw = read_fmat(path);
  ResponseMatrix m;
  m.values = std::move(raw.values);
  m.subject_id = subject_id;
  m.tr_seconds = tr_seconds;
  return m;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

LabelTable make_label_table(std::vector<std::string> task_names, Eigen::MatrixXi labels) {
  if (static_cast<std::size_t>(labels.cols()) != task_names.size())
    throw Error("label columns do not match task names");
  LabelTable table;
  table.task_names = std::move(task_names);
  table.labels = std::move(labels);
  for (Eigen::Index t = 0; t < table.labels.cols(); ++t) {
    int k = 0;
    for (Eigen::Index w = 0; w < table.labels.rows(); ++w) {
      const int v = table.labels(w, t);
      if (v < 0) throw Error("negative label in task " + table.task_names[static_cast<std::size_t>(t)]);
      k = std::max(k, v + 1);
    }
    std::vector<bool> seen(static_cast<std::size_t>(k), false);
    for (Eigen::Index w = 0; w < table.labels.rows(); ++w) seen[static_cast<std::size_t>(table.labels(w, t))] = true;
    for (int c = 0; c < k; ++c)
      if (!seen[static_cast<std::size_t>(c)])
        throw Error("class " + std::to_string(c) + " unused in task " + table.task_names[static_cast<std::size_t>(t)]);
    table.class_counts.push_back(k);
  }
  return table;
}

LabelTable load_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("labels file is empty: " + path.string());
  auto header = split(strip_cr(line), '\t');
  if (header.empty() || header[0] != "word_index") throw Error("labels header must start with word_index");
  std::vector<std::string> tasks(header.begin() + 1, header.end());
  if (tasks.empty()) throw Error("labels file has no task columns");

  std::vector<std::pair<long long, std::vector<int>>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cells = split(line, '\t');
    if (cells.size() != header.size())
      throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " cells");
    const long long idx = parse_int(cells[0], "word_index");
    std::vector<int> labels;
    for (std::size_t t = 1; t < cells.size(); ++t) {
      const long long v = parse_int(cells[t], "label");
      if (v < 0) throw Error("line " + std::to_string(line_no) + ": negative label");
      labels.push_back(static_cast<int>(v));
    }
    rows.emplace_back(idx, std::move(labels));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  Eigen::MatrixXi m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].first != static_cast<long long>(r))
      throw Error("gap in word_index at " + std::to_string(r));
    for (std::size_t t = 0; t < tasks.size(); ++t)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = rows[r].second[t];
  }
  return make_label_table(std::move(tasks), std::move(m));
}

void save_labels(const LabelTable& labels, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "word_index";
  for (const auto& t : labels.task_names) out << '\t' << t;
  out << '\n';
  for (Eigen::Index w = 0; w < labels.labels.rows(); ++w) {
    out << w;
    for (Eigen::Index t = 0; t < labels.labels.cols(); ++t) out << '\t' << labels.labels(w, t);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Timeline
// ---------------------------------------------------------------------------

WordTimeline load_timeline(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("timeline file is empty");
  std::vector<std::pair<long long, std::pair<double, int>>> rows;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cells = split(line, '\t');
    if (cells.size() != 3) throw Error("timeline rows need 3 cells");
    rows.push_back({parse_int(cells[0], "word_index"),
                    {parse_double(cells[1], "onset_seconds"), static_cast<int>(parse_int(cells[2], "sentence_index"))}});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  WordTimeline tl;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].first != static_cast<long long>(r)) throw Error("gap in timeline word_index at " + std::to_string(r));
    if (r > 0 && rows[r].second.first < rows[r - 1].second.first)
      throw Error("timeline onsets decrease at word " + std::to_string(r));
    tl.onset_seconds.push_back(rows[r].second.first);
    tl.sentence_index.push_back(rows[r].second.second);
  }
  return tl;
}

void save_timeline(const WordTimeline& timeline, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "word_index\tonset_seconds\tsentence_index\n";
  out.precision(17);
  for (std::size_t w = 0; w < timeline.size(); ++w)
    out << w << '\t' << timeline.onset_seconds[w] << '\t' << timeline.sentence_index[w] << '\n';
}

WordTimeline uniform_timeline(std::size_t words, std::size_t trs, double tr_seconds, std::size_t words_per_sentence) {
  if (words == 0 || trs == 0 || tr_seconds <= 0.0) throw Error("uniform_timeline needs positive sizes");
  WordTimeline tl;
  const double span = static_cast<double>(trs) * tr_seconds;
  const double step = span / static_cast<double>(words);
  for (std::size_t w = 0; w < words; ++w) {
    tl.onset_seconds.push_back(step * static_cast<double>(w));
    tl.sentence_index.push_back(static_cast<int>(w / std::max<std::size_t>(words_per_sentence, 1)));
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Atlas
// ---------------------------------------------------------------------------

AtlasMap make_atlas(std::vector<std::string> voxel_to_parcel, std::map<std::string, std::vector<std::string>> roi_groups) {
  AtlasMap atlas;
  atlas.voxel_to_parcel = std::move(voxel_to_parcel);
  if (roi_groups.empty()) {
    atlas.roi_groups = default_roi_groups();
    return atlas;
  }
  const std::set<std::string> known(atlas.voxel_to_parcel.begin(), atlas.voxel_to_parcel.end());
  for (const auto& [roi, parcels] : roi_groups) {
    if (parcels.empty()) throw Error("ROI " + roi + " has no parcels");
    for (const auto& p : parcels)
      if (!known.count(p)) throw Error("unknown parcel " + p);
  }
  atlas.roi_groups = std::move(roi_groups);
  return atlas;
}

AtlasMap load_atlas(const fs::path& voxel_csv, const fs::path& roi_json) {
  std::ifstream in(voxel_csv);
  if (!in) throw Error("cannot open " + voxel_csv.string());
  std::vector<std::pair<long long, std::string>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (cells.size() != 2) throw Error("atlas rows need voxel_index,parcel_name");
    if (first && !is_int(cells[0])) {
      first = false;
      continue;  // header
    }
    first = false;
    rows.emplace_back(parse_int(cells[0], "voxel_index"), cells[1]);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> parcels;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (r > 0 && rows[r].first == rows[r - 1].first)
      throw Error("duplicate voxel index " + std::to_string(rows[r].first));
    if (rows[r].first != static_cast<long long>(r)) throw Error("gap in voxel_index at " + std::to_string(r));
    parcels.push_back(rows[r].second);
  }

  std::map<std::string, std::vector<std::string>> groups;
  if (!roi_json.empty()) {
    std::ifstream jin(roi_json);
    if (!jin) throw Error("cannot open " + roi_json.string());
    const std::string text((std::istreambuf_iterator<char>(jin)), std::istreambuf_iterator<char>());
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      json j;
      try {
        j = json::parse(text);
      } catch (const json::exception& e) {
        throw Error(std::string("malformed ROI JSON: ") + e.what());
      }
      if (!j.is_object()) throw Error("ROI JSON must be an object");
      for (auto it = j.begin(); it != j.end(); ++it) groups[it.key()] = it.value().get<std::vector<std::string>>();
    }
  }
  return make_atlas(std::move(parcels), std::move(groups));
}

void save_atlas_csv(const AtlasMap& atlas, const fs::path& voxel_csv) {
  std::ofstream out(voxel_csv, std::ios::trunc);
  if (!out) throw Error("cannot open " + voxel_csv.string() + " for writing");
  out << "voxel_index,parcel_name\n";
  for (std::size_t v = 0; v < atlas.voxel_to_parcel.size(); ++v) out << v << ',' << atlas.voxel_to_parcel[v] << '\n';
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

ValidationReport validate_dataset(const std::vector<MatrixHeader>& features, const LabelTable& labels,
                                  const WordTimeline& timeline, const std::vector<ResponseShape>& responses) {
  ValidationReport report;
  auto issue = [&](std::string s) { report.issues.push_back(std::move(s)); };

  if (features.empty()) issue("no feature layers");
  std::size_t words = features.empty() ? labels.words() : features.front().rows;
  std::vector<int> layers;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& h = features[i];
    if (h.kind != "word") issue("layer file " + std::to_string(i) + " is not word kind");
    if (h.rows != words) issue("word count layer " + std::to_string(h.layer) + ": " + std::to_string(h.rows) + " vs " + std::to_string(words));
    if (h.cols != features.front().cols) issue("dimension count layer " + std::to_string(h.layer));
    if (h.rows == 0 || h.cols == 0) issue("empty layer " + std::to_string(h.layer));
    layers.push_back(h.layer);
  }
  std::sort(layers.begin(), layers.end());
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i] != static_cast<int>(i) + 1) {
      issue("layer count gap: expected layer " + std::to_string(i + 1) + ", found " + std::to_string(layers[i]));
      break;
    }

  if (labels.words() != words)
    issue("word count: labels " + std::to_string(labels.words()) + " vs features " + std::to_string(words));
  if (timeline.size() != words)
    issue("timeline length: " + std::to_string(timeline.size()) + " vs features " + std::to_string(words));
  for (std::size_t w = 1; w < timeline.size(); ++w)
    if (timeline.onset_seconds[w] < timeline.onset_seconds[w - 1]) {
      issue("timeline onsets decrease at word " + std::to_string(w));
      break;
    }

  if (responses.empty()) issue("no subjects");
  if (!responses.empty()) {
    // Reference TR count is the most common one across subjects.
    std::map<std::size_t, int> votes;
    for (const auto& r : responses) ++votes[r.trs];
    const std::size_t trs = std::max_element(votes.begin(), votes.end(), [](const auto& a, const auto& b) {
                              return a.second < b.second;
                            })->first;
    const std::size_t voxels = responses.front().voxels;
    for (const auto& r : responses) {
      if (r.trs != trs) issue("TR count subject " + r.subject_id + ": " + std::to_string(r.trs) + " vs " + std::to_string(trs));
      if (r.trs < 2) issue("too few TRs subject " + r.subject_id);
      if (r.voxels != voxels) issue("voxel count subject " + r.subject_id);
      if (!(r.tr_seconds > 0.0)) issue("non-positive TR duration subject " + r.subject_id);
    }
    const double scan_end = static_cast<double>(trs) * responses.front().tr_seconds;
    for (std::size_t w = 0; w < timeline.size(); ++w)
      if (timeline.onset_seconds[w] < 0.0 || timeline.onset_seconds[w] > scan_end) {
        issue("timeline onset outside scan at word " + std::to_string(w));
        break;
      }
  }
  return report;
}

ValidationReport validate_dataset(const std::vector<FeatureMatrix>& features, const LabelTable& labels,
                                  const WordTimeline& timeline, const std::vector<ResponseMatrix>& responses) {
  std::vector<MatrixHeader> headers;
  ValidationReport extra;
  for (const auto& f : features) {
    headers.push_back({f.rows(), f.cols(), f.unit_kind == UnitKind::word ? "word" : "tr", f.layer_index});
    if (!f.values.allFinite()) extra.issues.push_back("non-finite features layer " + std::to_string(f.layer_index));
  }
  std::vector<ResponseShape> shapes;
  for (const auto& r : responses) {
    shapes.push_back({r.subject_id, r.trs(), r.voxels(), r.tr_seconds});
    if (!r.values.allFinite()) extra.issues.push_back("non-finite responses subject " + r.subject_id);
  }
  auto report = validate_dataset(headers, labels, timeline, shapes);
  report.issues.insert(report.issues.end(), extra.issues.begin(), extra.issues.end());
  return report;
}

}  // namespace lingscrub

// lingscrub command-line driver.
//
//   lingscrub run      --config cfg.json [--stages a,b] [--set key=value]... [--force]
//   lingscrub <stage>  --config cfg.json [--set key=value]... [--force]
//   lingscrub report   --out dir
//   lingscrub synth    --out dir [--seed N] [--words N] [--subjects N] ...
//   lingscrub annotate --labels raw.tsv --out labels.tsv [--similarity sim.csv]

#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "lingscrub/annotation.hpp"
#include "lingscrub/pipeline.hpp"
#include "lingscrub/synth.hpp"
#include "lingscrub/text.hpp"

namespace ls = lingscrub;
namespace pl = lingscrub::pipeline;

namespace {

struct RunArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> stages;
  bool force = false;
  bool quiet = false;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
  cmd->add_option("--config,-c", args.config, "pipeline configuration JSON")->required();
  cmd->add_option("--set", args.overrides, "override a config value, e.g. removal.lambda=0.5");
  cmd->add_flag("--force", args.force, "rerun stages even when outputs are current");
  cmd->add_flag("--quiet,-q", args.quiet, "suppress progress messages");
}

int run_stages(const RunArgs& args, std::set<pl::Stage> stages) {
  pl::PipelineConfig cfg;
  try {
    cfg = pl::load_config(args.config, args.overrides);
  } catch (const std::exception& e) {
    std::cerr << "lingscrub: " << e.what() << '\n';
    return pl::validation_failure;
  }
  return pl::run_pipeline(cfg, stages, {args.force, args.quiet});
}

// Raw annotation TSV: word_index then one column per task holding raw values
// (integers or strings). Regroups the documented tasks and writes dense labels.
int annotate(const std::string& in_path, const std::string& out_path, const std::string& sim_path) {
  std::ifstream in(in_path);
  if (!in) throw ls::Error("cannot open " + in_path);
  std::string line;
  if (!std::getline(in, line)) throw ls::Error("empty annotation file");
  const auto header = ls::split(ls::strip_cr(line), '\t');
  if (header.size() < 2) throw ls::Error("annotation file needs at least one task column");
  std::vector<std::vector<std::string>> columns(header.size() - 1);
  while (std::getline(in, line)) {
    line = ls::strip_cr(line);
    if (line.empty()) continue;
    const auto cells = ls::split(line, '\t');
    if (cells.size() != header.size()) throw ls::Error("ragged annotation row: " + line);
    for (std::size_t c = 1; c < cells.size(); ++c) columns[c - 1].push_back(cells[c]);
  }
  const std::size_t words = columns.front().size();
  Eigen::MatrixXi labels(static_cast<Eigen::Index>(words), static_cast<Eigen::Index>(columns.size()));
  std::vector<std::string> names(header.begin() + 1, header.end());
  for (std::size_t t = 0; t < columns.size(); ++t) {
    const bool numeric = std::all_of(columns[t].begin(), columns[t].end(), [](const std::string& s) { return ls::is_int(s); });
    ls::LabelList col;
    if (numeric) {
      ls::LabelList raw;
      for (const auto& s : columns[t]) raw.push_back(static_cast<int>(ls::parse_int(s, names[t])));
      col = ls::annotation::regroup_labels(names[t], raw);
      if (col == raw) col = ls::annotation::encode_string_labels(columns[t]);
    } else {
      col = ls::annotation::encode_string_labels(columns[t]);
    }
    for (std::size_t w = 0; w < words; ++w) labels(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(t)) = col[w];
  }
  const auto table = ls::make_label_table(names, labels);
  ls::save_labels(table, out_path);
  if (!sim_path.empty()) ls::annotation::save_similarity_csv(ls::annotation::task_similarity_matrix(table), sim_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lingscrub: linguistic property removal and brain alignment"};
  app.set_version_flag("--version", std::string(pl::kVersion));
  app.require_subcommand(1);

  RunArgs run_args;
  std::string stage_list;
  auto* run = app.add_subcommand("run", "run pipeline stages in dependency order");
  add_run_options(run, run_args);
  run->add_option("--stages", stage_list, "comma-separated subset of stages (default: all)");

  std::vector<std::pair<pl::Stage, CLI::App*>> stage_cmds;
  std::vector<RunArgs> stage_args(pl::all_stages().size());
  for (std::size_t i = 0; i < pl::all_stages().size(); ++i) {
    const pl::Stage s = pl::all_stages()[i];
    auto* cmd = app.add_subcommand(pl::stage_name(s), "run only the " + pl::stage_name(s) + " stage");
    add_run_options(cmd, stage_args[i]);
    stage_cmds.emplace_back(s, cmd);
  }

  std::string report_dir;
  auto* report = app.add_subcommand("report", "collect final tables from a finished run");
  report->add_option("--out", report_dir, "pipeline output directory")->required();

  ls::synth::SynthConfig synth_cfg;
  std::string synth_dir;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset with planted properties");
  synth->add_option("--out", synth_dir, "destination directory")->required();
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--words", synth_cfg.n_words);
  synth->add_option("--dims", synth_cfg.dims);
  synth->add_option("--layers", synth_cfg.n_layers);
  synth->add_option("--subjects", synth_cfg.n_subjects);
  synth->add_option("--trs", synth_cfg.trs);
  synth->add_option("--voxels", synth_cfg.voxels);
  synth->add_option("--noise", synth_cfg.noise_sd);
  synth->add_option("--coupling", synth_cfg.brain_coupling);

  std::string ann_in, ann_out, ann_sim;
  auto* ann = app.add_subcommand("annotate", "regroup raw annotations into dense class labels");
  ann->add_option("--labels", ann_in, "raw annotation TSV")->required();
  ann->add_option("--out", ann_out, "labels TSV to write")->required();
  ann->add_option("--similarity", ann_sim, "optional task similarity CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      std::set<pl::Stage> stages;
      if (stage_list.empty()) stages.insert(pl::all_stages().begin(), pl::all_stages().end());
      else
        for (const auto& name : ls::split(stage_list, ',')) stages.insert(pl::parse_stage(name));
      return run_stages(run_args, stages);
    }
    for (std::size_t i = 0; i < stage_cmds.size(); ++i)
      if (*stage_cmds[i].second) return run_stages(stage_args[i], {stage_cmds[i].first});
    if (*report) {
      pl::emit_report(report_dir);
      return 0;
    }
    if (*synth) {
      ls::synth::write_dataset(ls::synth::generate_dataset(synth_cfg), synth_cfg, synth_dir);
      return 0;
    }
    if (*ann) return annotate(ann_in, ann_out, ann_sim);
  } catch (const ls::NumericalError& e) {
    std::cerr << "lingscrub: numerical failure: " << e.what() << '\n';
    return pl::numerical_failure;
  } catch (const std::exception& e) {
    std::cerr << "lingscrub: " << e.what() << '\n';
    return pl::validation_failure;
  }
  return 0;
}

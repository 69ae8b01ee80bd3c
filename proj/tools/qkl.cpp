// qkl: quantum kernel learning experiments on spoken-command corpora.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qkl/errors.hpp"
#include "qkl/pipeline.hpp"
#include "qkl/random.hpp"
#include "qkl/synth.hpp"

namespace fs = std::filesystem;
using namespace qkl;

namespace {

struct Common {
  std::vector<std::string> configs;
  std::string manifest;
  std::string features;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string shots;
};

void add_common(CLI::App* sub, Common& c, bool multi_config = false) {
  if (multi_config) {
    sub->add_option("--config", c.configs, "Experiment config (JSON); repeat for each kernel setup")->required();
  } else {
    sub->add_option("--config", c.configs, "Experiment config (JSON)")->required()->expected(1);
  }
  sub->add_option("--manifest", c.manifest, "Corpus manifest CSV (id,path,label,split)")->required();
  sub->add_option("--features", c.features, "Feature cache written by `qkl features`");
  sub->add_option("--seed", c.seed, "Override the config seed");
  sub->add_option("--shots", c.shots, "Override sampling: a shot count or 'exact'");
}

std::uint64_t parse_shots(const std::string& s) {
  if (s == "exact") return 0;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size() && v > 0) return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
  }
  throw UsageError("--shots expects a positive integer or 'exact', got '" + s + "'");
}

std::vector<ExperimentConfig> resolve_configs(const Common& c) {
  std::vector<ExperimentConfig> out;
  for (const auto& path : c.configs) {
    ExperimentConfig cfg = load_config(path);
    if (c.seed) cfg.seed = *c.seed;
    if (!c.shots.empty()) cfg.shots = parse_shots(c.shots);
    cfg.validate();
    out.push_back(cfg);
  }
  return out;
}

std::optional<std::string> features_path(const Common& c) {
  if (c.features.empty()) return std::nullopt;
  return fs::absolute(c.features).string();
}

Corpus corpus_for(const Common& c, const ExperimentConfig& cfg) {
  return load_corpus(load_manifest(c.manifest), cfg, features_path(c));
}

// Rows tagged "train" when the manifest carries split tags, else every row.
std::vector<std::size_t> training_rows(const Corpus& corpus) {
  std::vector<std::size_t> tagged, all;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    all.push_back(i);
    if (corpus.splits[i] == "train") tagged.push_back(i);
  }
  return tagged.empty() ? all : tagged;
}

void print_table(const ResultTable& t) {
  for (const auto& r : t.rows) {
    std::printf("%-28s acc=%.4f  cluster=%.4f  folds=%zu  %.2fs\n", r.label.c_str(), r.mean_accuracy,
                r.cluster_distance, r.fold_accuracies.size(), r.wall_time_s);
  }
}

void finish_run(const RunRecord& rec, const std::string& out) {
  const ResultTable table = execute_record(rec);
  emit_outputs(table, out, rec);
  print_table(table);
  std::cout << "wrote " << (fs::path(out) / "results.csv").string() << "\n";
}

RunRecord make_record(const std::string& command, const Common& c, std::vector<ExperimentConfig> configs) {
  RunRecord rec;
  rec.command = command;
  rec.configs = std::move(configs);
  rec.manifest = fs::absolute(c.manifest).string();
  rec.features = features_path(c);
  return rec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum kernel learning for low-resource spoken command recognition"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string synth_kind = "tones", synth_out;
  std::uint64_t synth_seed = 0;
  int synth_classes = 0, synth_per_class = 60, synth_dims = 2;
  double synth_snr = 10.0, synth_noise = 0.03;
  synth->add_option("--kind", synth_kind, "tones (WAV files) or radial (feature cache)")
      ->check(CLI::IsMember({"tones", "radial"}));
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--classes", synth_classes, "Number of classes (tones 4, radial 3)");
  synth->add_option("--per-class", synth_per_class, "Utterances per class");
  synth->add_option("--snr-db", synth_snr, "Tones: white-noise SNR in dB");
  synth->add_option("--dims", synth_dims, "Radial: dimensionality");
  synth->add_option("--noise", synth_noise, "Radial: coordinate jitter");

  // features
  auto* features = app.add_subcommand("features", "Extract and cache frame-averaged log-mel features");
  Common feat;
  features->add_option("--config", feat.configs, "Experiment config (JSON)")->required()->expected(1);
  features->add_option("--manifest", feat.manifest, "Corpus manifest CSV")->required();
  features->add_option("--out", feat.out, "Cache file to write")->required();
  features->add_option("--seed", feat.seed, "Override the config seed");

  // gram
  auto* gram = app.add_subcommand("gram", "Compute and store the training Gram matrix");
  Common gc;
  add_common(gram, gc);
  gram->add_option("--out", gc.out, "Gram file to write")->required();

  // train
  auto* trn = app.add_subcommand("train", "Fit transforms, metric head and SVM on the training rows");
  Common tc;
  add_common(trn, tc);
  trn->add_option("--out", tc.out, "Model directory")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Score a trained model on held-out rows");
  std::string model_dir, eval_manifest, eval_features, eval_out;
  bool eval_all = false;
  ev->add_option("--model", model_dir, "Model directory from `qkl train`")->required();
  ev->add_option("--manifest", eval_manifest, "Corpus manifest CSV")->required();
  ev->add_option("--features", eval_features, "Feature cache");
  ev->add_option("--out", eval_out, "Directory for predictions.csv");
  ev->add_flag("--all", eval_all, "Score every row, including the model's training rows");

  // cv
  auto* cv = app.add_subcommand("cv", "k-fold cross-validation (or the config's fixed split)");
  Common cc;
  std::optional<std::uint64_t> cv_shuffle;
  add_common(cv, cc);
  cv->add_option("--out", cc.out, "Output directory")->required();
  cv->add_option("--shuffle-labels", cv_shuffle, "Permute labels with this seed (null control)");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Accuracy versus training-set size");
  Common sc;
  std::vector<int> sweep_sizes;
  add_common(sweep, sc);
  sweep->add_option("--out", sc.out, "Output directory")->required();
  sweep->add_option("--sizes", sweep_sizes, "Training sizes (default: the config's protocol.sizes)")->delimiter(',');

  // compare
  auto* cmp = app.add_subcommand("compare", "Several kernel setups over shared folds");
  Common mc;
  add_common(cmp, mc, true);
  cmp->add_option("--out", mc.out, "Output directory")->required();

  // rerun
  auto* rerun = app.add_subcommand("rerun", "Replay a run from its run_record.json");
  std::string record_path, rerun_out;
  rerun->add_option("--record", record_path, "run_record.json")->required();
  rerun->add_option("--out", rerun_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      if (synth_kind == "tones") {
        ToneCorpusSpec spec;
        spec.classes = synth_classes > 0 ? synth_classes : 4;
        spec.per_class = synth_per_class;
        spec.snr_db = synth_snr;
        spec.seed = synth_seed;
        const Manifest m = write_tone_corpus(spec, synth_out);
        std::cout << "wrote " << m.size() << " utterances to " << synth_out << "\n";
      } else {
        RadialCorpusSpec spec;
        spec.classes = synth_classes > 0 ? synth_classes : 3;
        spec.per_class = synth_per_class;
        spec.dims = synth_dims;
        spec.noise = synth_noise;
        spec.seed = synth_seed;
        const RadialCorpus c = write_radial_corpus(spec, synth_out);
        std::cout << "wrote " << c.manifest.size() << " points to " << synth_out << "\n";
      }
    } else if (*features) {
      ExperimentConfig cfg = load_config(feat.configs.front());
      if (feat.seed) cfg.seed = *feat.seed;
      const Corpus corpus = extract_corpus(load_manifest(feat.manifest), cfg.features, cfg.seed);
      save_feature_cache({corpus.base, "frame_mean"}, feat.out);
      std::cout << "wrote " << corpus.size() << " x " << corpus.base.cols() << " features to " << feat.out << "\n";
    } else if (*gram) {
      const ExperimentConfig cfg = resolve_configs(gc).front();
      const Corpus corpus = corpus_for(gc, cfg);
      const auto rows = training_rows(corpus);
      const FittedModel m = fit_model(cfg, corpus, rows, 0);
      std::vector<std::string> ids;
      for (std::size_t i : rows) ids.push_back(corpus.ids[i]);
      const GramMatrix g = gram_matrix(cfg.kernel.kind, cfg.encoding, m.kernel_train, cfg.sample_mode(0), ids);
      const GramDiagnostics d = diagnose(g);
      save_gram(g, gc.out);
      std::printf("N=%lld  asymmetry=%.3g  diagonal_dev=%.3g  min_eig=%.6g\n", static_cast<long long>(g.size()),
                  d.max_asymmetry, d.max_diagonal_deviation, d.min_eigenvalue);
    } else if (*trn) {
      const ExperimentConfig cfg = resolve_configs(tc).front();
      const Corpus corpus = corpus_for(tc, cfg);
      const auto rows = training_rows(corpus);
      const FittedModel m = fit_model(cfg, corpus, rows, 0);
      save_fitted(m, tc.out);
      std::cout << "trained on " << rows.size() << " rows; model in " << tc.out << "\n";
    } else if (*ev) {
      const FittedModel m = load_fitted(model_dir);
      const std::optional<std::string> cache =
          eval_features.empty() ? std::nullopt : std::optional<std::string>(eval_features);
      const Corpus corpus = load_corpus(load_manifest(eval_manifest), m.config, cache);
      const std::set<std::string> seen(m.svm.row_ids.begin(), m.svm.row_ids.end());
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (eval_all || !seen.count(corpus.ids[i])) rows.push_back(i);
      }
      if (rows.empty()) throw UsageError("no rows to evaluate (every row was used for training; pass --all)");
      const auto pred = predict_rows(m, corpus, rows);
      std::size_t correct = 0;
      for (std::size_t r = 0; r < rows.size(); ++r) correct += pred[r] == corpus.labels[rows[r]];
      if (!eval_out.empty()) {
        fs::create_directories(eval_out);
        std::ofstream out(fs::path(eval_out) / "predictions.csv");
        if (!out) throw DataError(eval_out + ": cannot write predictions.csv");
        out << "id,label,predicted\n";
        for (std::size_t r = 0; r < rows.size(); ++r) {
          out << corpus.ids[rows[r]] << ',' << corpus.labels[rows[r]] << ',' << pred[r] << '\n';
        }
      }
      std::printf("accuracy=%.4f (%zu/%zu)\n", static_cast<double>(correct) / static_cast<double>(rows.size()), correct,
                  rows.size());
    } else if (*cv) {
      RunRecord rec = make_record("cv", cc, resolve_configs(cc));
      rec.label_shuffle_seed = cv_shuffle;
      finish_run(rec, cc.out);
    } else if (*sweep) {
      auto configs = resolve_configs(sc);
      if (!sweep_sizes.empty()) configs.front().protocol.sizes = sweep_sizes;
      configs.front().protocol.kind = ProtocolKind::Sweep;
      finish_run(make_record("sweep", sc, configs), sc.out);
    } else if (*cmp) {
      finish_run(make_record("compare", mc, resolve_configs(mc)), mc.out);
    } else if (*rerun) {
      std::ifstream in(record_path);
      if (!in) throw DataError(record_path + ": cannot open");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw DataError(record_path + ": " + e.what());
      }
      finish_run(RunRecord::from_json(j), rerun_out);
    }
  } catch (const Error& e) {
    std::cerr << "qkl: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "qkl: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

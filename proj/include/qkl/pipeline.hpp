#pragma once

#include <Eigen/Dense>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qkl/config.hpp"
#include "qkl/features.hpp"
#include "qkl/manifest.hpp"
#include "qkl/metric.hpp"

namespace qkl {

inline constexpr const char* kArtifactVersion = "0.1.0";

// Per-utterance base features in manifest order. For audio these are
// frame-averaged log-mel vectors; caches may hold pooled or raw rows.
struct Corpus {
  std::vector<std::string> ids;
  std::vector<std::string> labels;
  std::vector<std::string> splits;
  Eigen::MatrixXd base;

  std::size_t size() const { return ids.size(); }
};

// 1 s pad/trim, optional white-noise augmentation, 60-band log-mel, frame mean.
Eigen::VectorXd utterance_features(const Waveform& w, const FeatureConfig& cfg, std::uint64_t noise_seed);

Corpus extract_corpus(const Manifest& manifest, const FeatureConfig& cfg, std::uint64_t seed);
Corpus corpus_from_cache(const Manifest& manifest, const FeatureCache& cache);
// Cached rows when `cache_path` is given, otherwise audio extraction.
Corpus load_corpus(const Manifest& manifest, const ExperimentConfig& cfg,
                   const std::optional<std::string>& cache_path = std::nullopt);

struct Fold {
  std::vector<std::size_t> train;  // indices into the corpus
  std::vector<std::size_t> test;
};

// Stratified when every class has at least k members; otherwise falls back
// to plain shuffled folds and sets *stratified = false.
std::vector<Fold> kfold_split(const std::vector<std::string>& labels, int k, std::uint64_t seed,
                              bool* stratified = nullptr);
std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> kfold_split(const Manifest& manifest, int k,
                                                                                         std::uint64_t seed);

// Uses "train"/"test" split tags when present, else a stratified random
// split with the configured train fraction.
Fold fixed_split(const Corpus& corpus, double train_fraction, std::uint64_t seed);

// Stratified subsample of `pool` (largest-remainder allocation); keeps pool order.
std::vector<std::size_t> stratified_subsample(const std::vector<std::size_t>& pool,
                                              const std::vector<std::string>& labels, std::size_t size,
                                              std::uint64_t seed);

// Everything learned from one set of training rows: reducer and
// normalization, optional metric head, the kernel-side training rows and
// the one-vs-rest SVM.
struct FittedModel {
  ExperimentConfig config;
  std::uint64_t stream = 0;  // shot-sampling stream for the Gram / cross-Gram
  FeatureReducer reducer;
  std::optional<ProjectionHead> head;
  std::optional<MinMaxNormalizer> renorm;  // quantum kinds with the head: back into encoder range
  Eigen::MatrixXd kernel_train;
  SvmModel svm;
  TrainLog curve;
};

// `probe` rows only feed the per-epoch cluster-distance log of the head.
FittedModel fit_model(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<std::size_t>& train,
                      std::uint64_t stream, const std::vector<std::size_t>& probe = {});

// Rows as the kernel sees them after every fitted transform.
Eigen::MatrixXd kernel_inputs(const FittedModel& model, const Corpus& corpus, const std::vector<std::size_t>& rows);

std::vector<std::string> predict_rows(const FittedModel& model, const Corpus& corpus,
                                      const std::vector<std::size_t>& rows);

// <dir>/model.json (config, transforms), <dir>/svm.txt, <dir>/kernel_train.qfeat.
void save_fitted(const FittedModel& model, const std::string& dir);
FittedModel load_fitted(const std::string& dir);

struct FoldResult {
  double accuracy = 0.0;
  double cluster_distance = 0.0;
  std::vector<std::string> predictions;  // aligned with fold.test
  TrainLog curve;                        // empty unless the metric head is enabled
};

FoldResult run_fold(const ExperimentConfig& cfg, const Corpus& corpus, const Fold& fold, int fold_index);

struct ResultRow {
  std::string label;
  std::size_t train_size = 0;  // sweep rows; 0 otherwise
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracies;
  double cluster_distance = 0.0;
  double wall_time_s = 0.0;
  std::vector<TrainLog> curves;  // per fold, metric head only
};

struct ResultTable {
  std::vector<ResultRow> rows;
};

// k-fold or fixed split per cfg.protocol (a sweep protocol runs as a fixed split).
ResultRow run_experiment(const ExperimentConfig& cfg, const Corpus& corpus);
ResultRow run_folds(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<Fold>& folds);

ResultTable sweep_train_size(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<int>& sizes);

// Configs must agree on everything but kernel, metric, svm and label; all
// rows share the same folds.
ResultTable compare_kernels(const std::vector<ExperimentConfig>& configs, const Corpus& corpus);

// Seeded permutation of the labels; the permutation-null control.
Corpus with_shuffled_labels(Corpus corpus, std::uint64_t seed);

// Everything needed to replay a cv / sweep / compare run.
struct RunRecord {
  std::string command;  // "cv", "sweep" or "compare"
  std::vector<ExperimentConfig> configs;
  std::string manifest;
  std::optional<std::string> features;
  std::optional<std::uint64_t> label_shuffle_seed;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

ResultTable execute_record(const RunRecord& record);

// results.csv, folds.csv, timing.csv, curves.csv (metric head only), run_record.json.
void emit_outputs(const ResultTable& table, const std::string& out_dir, const RunRecord& record);

std::string results_csv(const ResultTable& table);
ResultTable parse_results_csv(const std::string& path);

}  // namespace qkl

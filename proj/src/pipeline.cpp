#include "qkl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "qkl/random.hpp"

namespace qkl {

using nlohmann::json;

namespace {

// Seed streams under the experiment seed.
constexpr std::uint64_t kSeedFolds = 0xF01D;
constexpr std::uint64_t kSeedSplit = 0x5917;
constexpr std::uint64_t kSeedSweep = 0x5EE9;
constexpr std::uint64_t kSeedNoise = 0x9015E;
constexpr std::uint64_t kSeedEmbedShots = 0xE3B;
constexpr std::uint64_t kSeedSvm = 0x5E3;
constexpr std::uint64_t kSeedHead = 0x3E7;

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = X.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

template <typename T>
std::vector<T> take(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Re-raise with context, keeping the error category (and thus the exit code).
[[noreturn]] void rethrow_with_context(const std::exception_ptr& ep, const std::string& context) {
  try {
    std::rethrow_exception(ep);
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(context + ": " + e.what());
  }
}

void check_label_counts(const std::map<std::string, std::vector<std::size_t>>& by_class) {
  for (const auto& [label, rows] : by_class) {
    if (rows.size() < 2) throw UsageError("label '" + label + "' appears fewer than 2 times");
  }
}

std::map<std::string, std::vector<std::size_t>> group_by_label(const std::vector<std::string>& labels,
                                                               const std::vector<std::size_t>& subset) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i : subset) by_class[labels[i]].push_back(i);
  return by_class;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Z-basis measurement embeddings; shot seeds are keyed by corpus index so
// they do not depend on fold membership.
Eigen::MatrixXd embed_rows(const ExperimentConfig& cfg, const Eigen::MatrixXd& F, const std::vector<std::size_t>& corpus_idx) {
  Eigen::MatrixXd out(F.rows(), cfg.encoding.num_qubits);
  for (Eigen::Index r = 0; r < F.rows(); ++r) {
    SampleMode mode = SampleMode::exact();
    if (cfg.shots > 0) {
      mode = SampleMode::with_shots(cfg.shots, derive_seed(cfg.seed, {kSeedEmbedShots, corpus_idx[static_cast<std::size_t>(r)]}));
    }
    out.row(r) = measure_embedding(cfg.encoding, F.row(r).transpose(), mode).values.transpose();
  }
  return out;
}

// Representation the kernel effectively compares, for the cluster-distance diagnostic.
Eigen::MatrixXd kernel_space(const ExperimentConfig& cfg, const Eigen::MatrixXd& K_in) {
  switch (cfg.kernel.kind.variant) {
    case KernelVariant::QuantumProjectedGaussian: {
      Eigen::MatrixXd out(K_in.rows(), 3 * cfg.encoding.num_qubits);
      for (Eigen::Index r = 0; r < K_in.rows(); ++r) out.row(r) = bloch_vectors(encode(cfg.encoding, K_in.row(r).transpose())).transpose();
      return out;
    }
    case KernelVariant::QuantumFidelity: {
      Eigen::MatrixXd out(K_in.rows(), cfg.encoding.num_qubits);
      for (Eigen::Index r = 0; r < K_in.rows(); ++r) out.row(r) = pauli_z_expectations(encode(cfg.encoding, K_in.row(r).transpose())).transpose();
      return out;
    }
    default:
      return K_in;
  }
}

bool same_non_kernel_sections(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.seed == b.seed && a.shots == b.shots && a.encoding == b.encoding && a.features == b.features &&
         a.protocol == b.protocol;
}

std::vector<Fold> folds_for(const ExperimentConfig& cfg, const Corpus& corpus) {
  if (cfg.protocol.kind == ProtocolKind::KFold) {
    return kfold_split(corpus.labels, cfg.protocol.k, derive_seed(cfg.seed, {kSeedFolds}));
  }
  return {fixed_split(corpus, cfg.protocol.train_fraction, derive_seed(cfg.seed, {kSeedSplit}))};
}

std::vector<std::string> split_semicolons(const std::string& s) {
  std::vector<std::string> out;
  std::string tok;
  std::istringstream is(s);
  while (std::getline(is, tok, ';')) out.push_back(tok);
  return out;
}

}  // namespace

Eigen::VectorXd utterance_features(const Waveform& w, const FeatureConfig& cfg, std::uint64_t noise_seed) {
  Waveform x = pad_trim_1s(w);
  if (!std::isinf(cfg.snr_db)) x = add_white_noise(x, cfg.snr_db, noise_seed);
  return frame_mean(mel_spectrogram(x, cfg.mel));
}

Corpus extract_corpus(const Manifest& manifest, const FeatureConfig& cfg, std::uint64_t seed) {
  manifest.validate();
  Corpus c;
  c.ids = manifest.ids();
  c.labels = manifest.labels();
  for (const auto& e : manifest.entries) c.splits.push_back(e.split);
  const auto n = static_cast<std::ptrdiff_t>(manifest.size());
  c.base.resize(n, cfg.mel.n_mels);
  std::vector<std::exception_ptr> errors(manifest.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& e = manifest.entries[static_cast<std::size_t>(i)];
    try {
      const Waveform w = load_wav(manifest.resolve(e));
      c.base.row(i) = utterance_features(w, cfg, derive_seed(seed, {kSeedNoise, fnv1a(e.id)})).transpose();
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i]) rethrow_with_context(errors[i], "utterance '" + manifest.entries[i].id + "'");
  }
  return c;
}

Corpus corpus_from_cache(const Manifest& manifest, const FeatureCache& cache) {
  manifest.validate();
  if (static_cast<std::size_t>(cache.rows.rows()) != manifest.size()) {
    throw DataError("feature cache has " + std::to_string(cache.rows.rows()) + " rows, manifest has " +
                    std::to_string(manifest.size()) + " entries");
  }
  Corpus c;
  c.ids = manifest.ids();
  c.labels = manifest.labels();
  for (const auto& e : manifest.entries) c.splits.push_back(e.split);
  c.base = cache.rows;
  return c;
}

Corpus load_corpus(const Manifest& manifest, const ExperimentConfig& cfg, const std::optional<std::string>& cache_path) {
  if (cache_path) return corpus_from_cache(manifest, load_feature_cache(*cache_path));
  return extract_corpus(manifest, cfg.features, cfg.seed);
}

std::vector<Fold> kfold_split(const std::vector<std::string>& labels, int k, std::uint64_t seed, bool* stratified) {
  const std::size_t n = labels.size();
  if (k < 2 || static_cast<std::size_t>(k) > n) {
    throw UsageError("k-fold needs 2 <= k <= N (k=" + std::to_string(k) + ", N=" + std::to_string(n) + ")");
  }
  const auto by_class = group_by_label(labels, iota_n(n));
  check_label_counts(by_class);
  bool strat = true;
  for (const auto& [label, rows] : by_class) strat = strat && rows.size() >= static_cast<std::size_t>(k);
  if (stratified) *stratified = strat;

  Rng rng(seed);
  std::vector<std::size_t> order;
  if (strat) {
    // Class-major order dealt round-robin: per-class counts per fold differ by at most one.
    for (const auto& [label, rows] : by_class) {
      std::vector<std::size_t> r = rows;
      std::shuffle(r.begin(), r.end(), rng);
      order.insert(order.end(), r.begin(), r.end());
    }
  } else {
    std::cerr << "warning: some class has fewer than " << k << " members; using non-stratified folds\n";
    order = iota_n(n);
    std::shuffle(order.begin(), order.end(), rng);
  }

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (std::size_t p = 0; p < order.size(); ++p) folds[p % static_cast<std::size_t>(k)].test.push_back(order[p]);
  for (Fold& f : folds) {
    std::sort(f.test.begin(), f.test.end());
    std::vector<bool> in_test(n, false);
    for (std::size_t i : f.test) in_test[i] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_test[i]) f.train.push_back(i);
    }
  }
  return folds;
}

std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> kfold_split(const Manifest& manifest, int k,
                                                                                         std::uint64_t seed) {
  manifest.validate();
  const auto ids = manifest.ids();
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
  for (const Fold& f : kfold_split(manifest.labels(), k, seed)) out.emplace_back(take(ids, f.train), take(ids, f.test));
  return out;
}

Fold fixed_split(const Corpus& corpus, double train_fraction, std::uint64_t seed) {
  Fold f;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus.splits[i] == "train") f.train.push_back(i);
    if (corpus.splits[i] == "test") f.test.push_back(i);
  }
  if (!f.train.empty() && !f.test.empty()) return f;

  f = {};
  Rng rng(seed);
  const auto by_class = group_by_label(corpus.labels, iota_n(corpus.size()));
  check_label_counts(by_class);
  for (const auto& [label, rows] : by_class) {
    std::vector<std::size_t> r = rows;
    std::shuffle(r.begin(), r.end(), rng);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(r.size()))), 1, r.size() - 1);
    f.train.insert(f.train.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(n_train));
    f.test.insert(f.test.end(), r.begin() + static_cast<std::ptrdiff_t>(n_train), r.end());
  }
  std::sort(f.train.begin(), f.train.end());
  std::sort(f.test.begin(), f.test.end());
  return f;
}

std::vector<std::size_t> stratified_subsample(const std::vector<std::size_t>& pool,
                                              const std::vector<std::string>& labels, std::size_t size,
                                              std::uint64_t seed) {
  if (size > pool.size()) {
    throw UsageError("requested training size " + std::to_string(size) + " exceeds the pool of " +
                     std::to_string(pool.size()));
  }
  if (size == pool.size()) return pool;

  const auto by_class = group_by_label(labels, pool);
  struct Quota {
    const std::vector<std::size_t>* rows;
    std::size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  std::size_t assigned = 0;
  for (const auto& [label, rows] : by_class) {
    const double exact = static_cast<double>(size) * static_cast<double>(rows.size()) / static_cast<double>(pool.size());
    const auto base = static_cast<std::size_t>(std::floor(exact));
    quotas.push_back({&rows, base, exact - static_cast<double>(base)});
    assigned += base;
  }
  std::vector<std::size_t> order = iota_n(quotas.size());
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (std::size_t i = 0; assigned < size; ++i, ++assigned) ++quotas[order[i % order.size()]].take;

  Rng rng(seed);
  std::vector<std::size_t> out;
  for (const Quota& q : quotas) {
    std::vector<std::size_t> r = *q.rows;
    std::shuffle(r.begin(), r.end(), rng);
    out.insert(out.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(std::min(q.take, r.size())));
  }
  // Back to pool order.
  std::map<std::size_t, std::size_t> rank;
  for (std::size_t p = 0; p < pool.size(); ++p) rank[pool[p]] = p;
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; });
  return out;
}

namespace {

// Kernel-side rows before any metric head: normalized features, or their
// Z-measurement embeddings when the head or a classical kernel consumes those.
Eigen::MatrixXd pre_head(const ExperimentConfig& cfg, const FeatureReducer& reducer, const Corpus& corpus,
                         const std::vector<std::size_t>& rows) {
  const Eigen::MatrixXd f = reducer.apply(take_rows(corpus.base, rows));
  const bool quantum = cfg.kernel.kind.is_quantum();
  if (quantum && !cfg.metric.enabled) return f;
  if (quantum || cfg.kernel.input == KernelInput::Embedding) return embed_rows(cfg, f, rows);
  return f;
}

bool has_two_classes(const std::vector<std::string>& labels) {
  return std::any_of(labels.begin(), labels.end(), [&](const std::string& l) { return l != labels.front(); });
}

json row_json(const Eigen::RowVectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(row_json(m.row(r)));
  return rows;
}

Eigen::RowVectorXd row_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != cols) throw DataError("ragged matrix in model file");
    for (std::size_t c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

}  // namespace

FittedModel fit_model(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<std::size_t>& train,
                      std::uint64_t stream, const std::vector<std::size_t>& probe) {
  if (train.empty()) throw UsageError("no training rows");
  FittedModel m;
  m.config = cfg;
  m.stream = stream;
  m.reducer = FeatureReducer::fit(cfg.features.reducer, cfg.encoding.num_qubits, take_rows(corpus.base, train));
  Eigen::MatrixXd r = pre_head(cfg, m.reducer, corpus, train);
  const auto y = take(corpus.labels, train);

  if (cfg.metric.enabled) {
    HeadTrainConfig hc = cfg.metric.train;
    hc.seed = derive_seed(cfg.seed, {kSeedHead, stream});
    std::optional<LabeledSet> probe_set;
    if (!probe.empty() && has_two_classes(take(corpus.labels, probe))) {
      probe_set = LabeledSet{pre_head(cfg, m.reducer, corpus, probe), take(corpus.labels, probe)};
    }
    HeadTrainResult trained = train_head({r, y}, hc, probe_set);
    m.head = std::move(trained.head);
    m.curve = std::move(trained.log);
    r = project(*m.head, r);
    if (cfg.kernel.kind.is_quantum()) {
      m.renorm = MinMaxNormalizer::fit(r);
      r = m.renorm->transform(r);
    }
  }

  m.kernel_train = r;
  const GramMatrix gram =
      gram_matrix(cfg.kernel.kind, cfg.encoding, m.kernel_train, cfg.sample_mode(stream), take(corpus.ids, train));
  SvmConfig sc = cfg.svm;
  sc.seed = derive_seed(cfg.seed, {kSeedSvm, stream});
  m.svm = qkl::train(gram, y, sc);
  return m;
}

Eigen::MatrixXd kernel_inputs(const FittedModel& model, const Corpus& corpus, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd r = pre_head(model.config, model.reducer, corpus, rows);
  if (model.head) r = project(*model.head, r);
  if (model.renorm) r = model.renorm->transform(r);
  return r;
}

namespace {

std::vector<std::string> predict_inputs(const FittedModel& model, const Eigen::MatrixXd& k_test) {
  const ExperimentConfig& cfg = model.config;
  const Eigen::MatrixXd cross =
      cross_gram(cfg.kernel.kind, cfg.encoding, model.kernel_train, k_test, cfg.sample_mode(model.stream));
  return predict(model.svm, cross);
}

}  // namespace

std::vector<std::string> predict_rows(const FittedModel& model, const Corpus& corpus,
                                      const std::vector<std::size_t>& rows) {
  return predict_inputs(model, kernel_inputs(model, corpus, rows));
}

void save_fitted(const FittedModel& model, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(dir + ": cannot create model directory: " + ec.message());
  const std::filesystem::path root(dir);

  json j;
  j["artifact_version"] = kArtifactVersion;
  j["config"] = to_json(model.config);
  j["stream"] = model.stream;
  json red;
  red["kind"] = to_string(model.reducer.kind);
  red["q"] = model.reducer.q;
  red["lower"] = row_json(model.reducer.normalizer.lower());
  red["upper"] = row_json(model.reducer.normalizer.upper());
  if (model.reducer.pca) {
    red["pca_mean"] = row_json(model.reducer.pca->mean());
    red["pca_components"] = matrix_json(model.reducer.pca->components());
  }
  j["reducer"] = red;
  if (model.head) {
    j["head"] = {{"weight", matrix_json(model.head->weight)}, {"scale", model.head->scale}, {"offset", model.head->offset}};
  } else {
    j["head"] = nullptr;
  }
  if (model.renorm) {
    j["renorm"] = {{"lower", row_json(model.renorm->lower())}, {"upper", row_json(model.renorm->upper())}};
  } else {
    j["renorm"] = nullptr;
  }
  std::ofstream out(root / "model.json");
  if (!out) throw DataError((root / "model.json").string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw DataError((root / "model.json").string() + ": write failed");

  save_model(model.svm, (root / "svm.txt").string());
  save_feature_cache({model.kernel_train, "kernel_train"}, (root / "kernel_train.qfeat").string());
}

FittedModel load_fitted(const std::string& dir) {
  const std::filesystem::path root(dir);
  const std::string path = (root / "model.json").string();
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  FittedModel m;
  try {
    const json j = json::parse(in);
    m.config = config_from_json(j.at("config"));
    m.stream = j.at("stream").get<std::uint64_t>();
    const json& red = j.at("reducer");
    m.reducer.kind = parse_reducer(red.at("kind").get<std::string>());
    m.reducer.q = red.at("q").get<int>();
    m.reducer.normalizer = MinMaxNormalizer::from_bounds(row_from_json(red.at("lower")), row_from_json(red.at("upper")));
    if (red.contains("pca_mean")) {
      m.reducer.pca = PcaReducer::from_parts(row_from_json(red.at("pca_mean")), matrix_from_json(red.at("pca_components")));
    }
    if (!j.at("head").is_null()) {
      const json& h = j.at("head");
      m.head = ProjectionHead{matrix_from_json(h.at("weight")), h.at("scale").get<double>(), h.at("offset").get<double>()};
    }
    if (!j.at("renorm").is_null()) {
      m.renorm = MinMaxNormalizer::from_bounds(row_from_json(j.at("renorm").at("lower")),
                                               row_from_json(j.at("renorm").at("upper")));
    }
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed model file: " + e.what());
  }
  m.svm = load_model((root / "svm.txt").string());
  m.kernel_train = load_feature_cache((root / "kernel_train.qfeat").string()).rows;
  if (static_cast<std::size_t>(m.kernel_train.rows()) != m.svm.row_ids.size()) {
    throw DataError(dir + ": kernel rows and SVM training rows disagree");
  }
  return m;
}

FoldResult run_fold(const ExperimentConfig& cfg, const Corpus& corpus, const Fold& fold, int fold_index) {
  if (fold.train.empty() || fold.test.empty()) throw UsageError("fold has an empty train or test set");
  const FittedModel model = fit_model(cfg, corpus, fold.train, static_cast<std::uint64_t>(fold_index), fold.test);
  const Eigen::MatrixXd k_test = kernel_inputs(model, corpus, fold.test);
  const auto y_test = take(corpus.labels, fold.test);

  FoldResult result;
  result.curve = model.curve;
  result.predictions = predict_inputs(model, k_test);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < y_test.size(); ++t) correct += result.predictions[t] == y_test[t];
  result.accuracy = static_cast<double>(correct) / static_cast<double>(y_test.size());

  result.cluster_distance = has_two_classes(y_test)
                                ? cluster_distance({kernel_space(cfg, k_test), y_test})
                                : cluster_distance({kernel_space(cfg, model.kernel_train), take(corpus.labels, fold.train)});
  return result;
}

ResultRow run_folds(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<Fold>& folds) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto nf = static_cast<int>(folds.size());
  std::vector<FoldResult> results(folds.size());
  std::vector<std::exception_ptr> errors(folds.size());
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < nf; ++f) {
    try {
      results[static_cast<std::size_t>(f)] = run_fold(cfg, corpus, folds[static_cast<std::size_t>(f)], f);
    } catch (...) {
      errors[static_cast<std::size_t>(f)] = std::current_exception();
    }
  }
  for (std::size_t f = 0; f < errors.size(); ++f) {
    if (errors[f]) rethrow_with_context(errors[f], cfg.label + ", fold " + std::to_string(f));
  }

  ResultRow row;
  row.label = cfg.label;
  double acc_sum = 0.0, cd_sum = 0.0;
  for (const FoldResult& r : results) {
    row.fold_accuracies.push_back(r.accuracy);
    acc_sum += r.accuracy;
    cd_sum += r.cluster_distance;
    if (cfg.metric.enabled) row.curves.push_back(r.curve);
  }
  row.mean_accuracy = acc_sum / static_cast<double>(results.size());
  row.cluster_distance = cd_sum / static_cast<double>(results.size());
  row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return row;
}

ResultRow run_experiment(const ExperimentConfig& cfg, const Corpus& corpus) {
  cfg.validate();
  return run_folds(cfg, corpus, folds_for(cfg, corpus));
}

ResultTable sweep_train_size(const ExperimentConfig& cfg, const Corpus& corpus, const std::vector<int>& sizes) {
  cfg.validate();
  if (sizes.empty()) throw UsageError("sweep needs at least one training size");
  const Fold split = fixed_split(corpus, cfg.protocol.train_fraction, derive_seed(cfg.seed, {kSeedSplit}));
  for (int s : sizes) {
    if (s < 2 || static_cast<std::size_t>(s) > split.train.size()) {
      throw UsageError("sweep size " + std::to_string(s) + " outside [2, " + std::to_string(split.train.size()) + "]");
    }
  }
  ResultTable table;
  for (int s : sizes) {
    const auto size = static_cast<std::size_t>(s);
    Fold f{stratified_subsample(split.train, corpus.labels, size, derive_seed(cfg.seed, {kSeedSweep, size})),
           split.test};
    ExperimentConfig c = cfg;
    c.label = cfg.label + "@" + std::to_string(s);
    ResultRow row = run_folds(c, corpus, {f});
    row.train_size = size;
    table.rows.push_back(std::move(row));
  }
  return table;
}

ResultTable compare_kernels(const std::vector<ExperimentConfig>& configs, const Corpus& corpus) {
  if (configs.empty()) throw UsageError("compare needs at least one config");
  for (const auto& c : configs) {
    c.validate();
    if (!same_non_kernel_sections(c, configs.front())) {
      throw UsageError("config '" + c.label + "' differs from '" + configs.front().label +
                       "' outside the kernel/metric/svm sections");
    }
  }
  const std::vector<Fold> folds = folds_for(configs.front(), corpus);
  ResultTable table;
  for (const auto& c : configs) table.rows.push_back(run_folds(c, corpus, folds));
  return table;
}

json RunRecord::to_json() const {
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["command"] = command;
  j["manifest"] = manifest;
  j["features"] = features ? json(*features) : json(nullptr);
  j["label_shuffle_seed"] = label_shuffle_seed ? json(*label_shuffle_seed) : json(nullptr);
  j["configs"] = json::array();
  for (const auto& c : configs) j["configs"].push_back(qkl::to_json(c));
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  RunRecord r;
  try {
    r.command = j.at("command").get<std::string>();
    r.manifest = j.at("manifest").get<std::string>();
    if (j.contains("features") && !j.at("features").is_null()) r.features = j.at("features").get<std::string>();
    if (j.contains("label_shuffle_seed") && !j.at("label_shuffle_seed").is_null()) {
      r.label_shuffle_seed = j.at("label_shuffle_seed").get<std::uint64_t>();
    }
    for (const auto& c : j.at("configs")) r.configs.push_back(config_from_json(c));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run record: ") + e.what());
  }
  if (r.configs.empty()) throw ConfigError("run record holds no configs");
  return r;
}

Corpus with_shuffled_labels(Corpus corpus, std::uint64_t seed) {
  Rng rng(seed);
  std::shuffle(corpus.labels.begin(), corpus.labels.end(), rng);
  return corpus;
}

ResultTable execute_record(const RunRecord& record) {
  if (record.configs.empty()) throw UsageError("run record holds no configs");
  const Manifest manifest = load_manifest(record.manifest);
  Corpus corpus = load_corpus(manifest, record.configs.front(), record.features);
  if (record.label_shuffle_seed) corpus = with_shuffled_labels(std::move(corpus), *record.label_shuffle_seed);

  if (record.command == "cv") {
    if (record.configs.size() != 1) throw UsageError("cv takes exactly one config");
    return {{run_experiment(record.configs.front(), corpus)}};
  }
  if (record.command == "sweep") {
    if (record.configs.size() != 1) throw UsageError("sweep takes exactly one config");
    return sweep_train_size(record.configs.front(), corpus, record.configs.front().protocol.sizes);
  }
  if (record.command == "compare") return compare_kernels(record.configs, corpus);
  throw UsageError("unknown run command '" + record.command + "'");
}

std::string results_csv(const ResultTable& table) {
  std::ostringstream os;
  os << "label,train_size,mean_accuracy,fold_accuracies,cluster_distance\n";
  for (const auto& r : table.rows) {
    os << r.label << ',' << r.train_size << ',' << fmt_double(r.mean_accuracy) << ',';
    for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f) os << (f ? ";" : "") << fmt_double(r.fold_accuracies[f]);
    os << ',' << fmt_double(r.cluster_distance) << '\n';
  }
  return os.str();
}

ResultTable parse_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  std::getline(in, line);
  if (line != "label,train_size,mean_accuracy,fold_accuracies,cluster_distance") throw DataError(path + ": bad header");
  ResultTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string tok;
    std::istringstream is(line);
    while (std::getline(is, tok, ',')) f.push_back(tok);
    if (f.size() != 5) throw DataError(path + ": malformed row");
    ResultRow r;
    r.label = f[0];
    r.train_size = std::stoull(f[1]);
    r.mean_accuracy = std::strtod(f[2].c_str(), nullptr);
    for (const auto& a : split_semicolons(f[3])) r.fold_accuracies.push_back(std::strtod(a.c_str(), nullptr));
    r.cluster_distance = std::strtod(f[4].c_str(), nullptr);
    t.rows.push_back(std::move(r));
  }
  return t;
}

void emit_outputs(const ResultTable& table, const std::string& out_dir, const RunRecord& record) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(out_dir + ": cannot create output directory: " + ec.message());
  const std::filesystem::path dir(out_dir);

  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    if (!out) throw DataError(p.string() + ": cannot open for writing");
    out << text;
    if (!out) throw DataError(p.string() + ": write failed");
  };

  write(dir / "results.csv", results_csv(table));

  std::ostringstream folds, timing, curves;
  folds << "label,fold,accuracy\n";
  timing << "label,wall_time_s\n";
  bool any_curve = false;
  curves << "label,fold,epoch,loss,grad_norm,cluster_distance\n";
  for (const auto& r : table.rows) {
    for (std::size_t f = 0; f < r.fold_accuracies.size(); ++f) {
      folds << r.label << ',' << f << ',' << fmt_double(r.fold_accuracies[f]) << '\n';
    }
    timing << r.label << ',' << fmt_double(r.wall_time_s) << '\n';
    for (std::size_t f = 0; f < r.curves.size(); ++f) {
      for (const auto& e : r.curves[f].epochs) {
        any_curve = true;
        curves << r.label << ',' << f << ',' << e.epoch << ',' << fmt_double(e.loss) << ',' << fmt_double(e.grad_norm)
               << ',' << fmt_double(e.cluster_distance) << '\n';
      }
    }
  }
  write(dir / "folds.csv", folds.str());
  write(dir / "timing.csv", timing.str());
  if (any_curve) write(dir / "curves.csv", curves.str());
  write(dir / "run_record.json", record.to_json().dump(2) + "\n");
}

}  // namespace qkl

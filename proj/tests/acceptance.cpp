// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero
// when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metric_checks.hpp"
#include "oracles.hpp"
#include "qkl/encoding.hpp"
#include "qkl/errors.hpp"
#include "qkl/kernels.hpp"
#include "qkl/pipeline.hpp"
#include "qkl/statevec.hpp"
#include "qkl/svm.hpp"
#include "qkl/synth.hpp"

using namespace qkl;
namespace fs = std::filesystem;
using std::numbers::pi;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "qkl_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome simulator_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2001);
  std::uniform_int_distribution<int> qubits(1, 4), depth(1, 20);
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    const int nq = qubits(rng);
    const auto gates = oracle::random_circuit(nq, depth(rng), rng);
    StateVector s(nq);
    for (const auto& g : gates) s.apply(g);
    worst = std::max(worst, (s.amplitudes() - oracle::run(nq, gates)).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  return {worst < 1e-10 && t < 10.0, "200 circuits, max |diff| " + fmt("%.2e", worst) + ", " + fmt("%.3f", t) + " s"};
}

Outcome analytic_kernels() {
  EncodingSpec s;
  s.num_qubits = 1;
  s.depth = 1;
  s.rotation_axis = RotationAxis::RY;
  s.entangler = Entangler::None;
  s.feature_scale = 1.0;
  const double gamma = 0.7;
  double worst = 0.0;
  for (int a = 0; a < 20; ++a) {
    for (int b = 0; b < 20; ++b) {
      const double t1 = -pi + 2 * pi * a / 19.0, t2 = -pi + 2 * pi * b / 19.0;
      const Eigen::VectorXd x1 = Eigen::VectorXd::Constant(1, t1), x2 = Eigen::VectorXd::Constant(1, t2);
      const double fid = std::abs(std::cos((t1 - t2) / 2));
      const Eigen::Vector3d b1(std::sin(t1), 0, std::cos(t1)), b2(std::sin(t2), 0, std::cos(t2));
      const double qg = std::exp(-gamma * (b1 - b2).squaredNorm());
      worst = std::max(worst, std::abs(fidelity_kernel(s, x1, x2) - fid));
      worst = std::max(worst, std::abs(projected_gaussian_kernel(s, x1, x2, gamma) - qg));
    }
  }
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  const double self = projected_gaussian_kernel(s, Eigen::VectorXd::Constant(1, 0.37), Eigen::VectorXd::Constant(1, 0.37));
  const double k_pi = projected_gaussian_kernel(s, zero, Eigen::VectorXd::Constant(1, pi));
  const double k_half = projected_gaussian_kernel(s, zero, Eigen::VectorXd::Constant(1, pi / 2));
  const double anchors = std::max({std::abs(self - 1.0), std::abs(k_pi - std::exp(-4.0)), std::abs(k_half - std::exp(-2.0))});
  return {worst < 1e-12 && anchors < 1e-12,
          "20x20 grid max err " + fmt("%.2e", worst) + ", anchors max err " + fmt("%.2e", anchors)};
}

Outcome gram_validity() {
  const std::vector<std::pair<std::string, KernelKind>> kinds = {
      {"fidelity", KernelKind::fidelity(false)},
      {"fidelity_squared", KernelKind::fidelity(true)},
      {"projected_gaussian", KernelKind::projected_gaussian(1.0)},
      {"rbf", KernelKind::rbf(1.0)},
      {"cosine", KernelKind::cosine()},
  };
  EncodingSpec spec;
  spec.num_qubits = 4;
  std::mt19937_64 rng(3003);
  std::uniform_real_distribution<double> u(-1, 1);
  bool pass = true;
  std::string detail;
  for (const auto& [name, kind] : kinds) {
    double asym = 0, diag = 0, min_eig = 1e300;
    std::mt19937_64 data_rng = rng;
    for (int d = 0; d < 10; ++d) {
      Eigen::MatrixXd X(32, 4);
      for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = u(data_rng);
      const GramDiagnostics g = diagnose(gram_matrix(kind, spec, X));
      asym = std::max(asym, g.max_asymmetry);
      diag = std::max(diag, g.max_diagonal_deviation);
      min_eig = std::min(min_eig, g.min_eigenvalue);
    }
    const bool ok = asym <= 1e-9 && diag <= 1e-9 && min_eig >= -1e-7;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + name + (ok ? " ok" : " VIOLATED") + " (asym " + fmt("%.1e", asym) +
              ", diag " + fmt("%.1e", diag) + ", min eig " + fmt("%.3g", min_eig) + ")";
  }
  return {pass, detail};
}

Outcome svm_oracle() {
  std::mt19937_64 rng(4004);
  std::uniform_int_distribution<int> size(2, 8);
  std::normal_distribution<double> g(0, 1);
  const double Cs[] = {0.1, 1.0, 10.0};
  double worst = 0.0;
  int mismatched = 0;
  for (int t = 0; t < 50; ++t) {
    const int n = size(rng);
    Eigen::MatrixXd X(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      y(i) = i % 2 ? 1.0 : -1.0;
      for (int j = 0; j < 3; ++j) X(i, j) = g(rng) + (j == 0 ? 0.5 * y(i) : 0.0);
    }
    const KernelKind kind = t % 2 ? KernelKind::rbf(0.5) : KernelKind::linear();
    Eigen::MatrixXd K(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) K(i, j) = classical_kernel(kind, X.row(i).transpose(), X.row(j).transpose());
    SvmConfig cfg;
    cfg.C = Cs[t % 3];
    const BinarySvm s = train_binary(K, y, cfg);
    const auto o = oracle::solve_dual(K, y, cfg.C);
    worst = std::max(worst, std::abs(s.dual_objective(K) - o.objective) / std::max(1.0, std::abs(o.objective)));
    const Eigen::VectorXd fs = K * s.alpha.cwiseProduct(y) + Eigen::VectorXd::Constant(n, s.bias);
    const Eigen::VectorXd fo = K * o.alpha.cwiseProduct(y) + Eigen::VectorXd::Constant(n, o.bias);
    for (int i = 0; i < n; ++i) mismatched += (fs(i) >= 0) != (fo(i) >= 0);
  }

  Eigen::MatrixXd X(4, 2);
  X << 1, 1, -1, -1, 1, -1, -1, 1;
  const std::vector<std::string> labels = {"a", "a", "b", "b"};
  auto acc = [&](const KernelKind& k) {
    GramMatrix gm;
    gm.kind = k;
    gm.values.resize(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) gm.values(i, j) = classical_kernel(k, X.row(i).transpose(), X.row(j).transpose());
    const auto p = predict(train(gm, labels), gm.values);
    int ok = 0;
    for (std::size_t i = 0; i < 4; ++i) ok += p[i] == labels[i];
    return ok / 4.0;
  };
  const double lin = acc(KernelKind::linear()), rbf = acc(KernelKind::rbf(1.0));
  const bool pass = worst < 1e-4 && mismatched == 0 && lin < 1.0 && rbf == 1.0;
  return {pass, "50 problems, max rel objective gap " + fmt("%.2e", worst) + ", " + std::to_string(mismatched) +
                    " prediction mismatches; XOR linear " + fmt("%.2f", lin) + ", rbf " + fmt("%.2f", rbf)};
}

Outcome gradient_checks() {
  using namespace metric_checks;
  std::mt19937_64 rng(5005);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int classes = 2 + t % 4, m = 2 + t % 3, din = 3 + t % 5, dout = 2 + t % 4;
    const EmbeddingBatch b = random_batch(classes, m, din, rng);
    const ProjectionHead h = random_head(dout, din, rng);
    worst = std::max({worst, gradient_error(angular_proto_loss, b, h), gradient_error(ge2e_loss, b, h)});
  }
  return {worst < 1e-4, "20 batches x 2 losses, max relative error " + fmt("%.2e", worst)};
}

Outcome shot_convergence() {
  EncodingSpec spec;
  spec.num_qubits = 4;
  const std::uint64_t n = 10000;
  const double bound = 5.0 / std::sqrt(static_cast<double>(n));
  std::mt19937_64 rng(6006);
  std::uniform_real_distribution<double> u(-1, 1);
  int within = 0, comp_within = 0;
  for (int t = 0; t < 1000; ++t) {
    Eigen::VectorXd x(4);
    for (int i = 0; i < 4; ++i) x(i) = u(rng);
    const Eigen::VectorXd exact = measure_embedding(spec, x, SampleMode::exact()).values;
    const Eigen::VectorXd est = measure_embedding(spec, x, SampleMode::with_shots(n, 700000 + t)).values;
    const Eigen::ArrayXd dev = (est - exact).cwiseAbs().array();
    within += (dev < bound).all();
    comp_within += static_cast<int>((dev < bound).count());
  }
  return {within >= 990, std::to_string(within) + "/1000 trials with every component within 5/sqrt(n) (" +
                             std::to_string(comp_within) + "/4000 components)"};
}

Outcome end_to_end() {
  const fs::path dir = scratch("tones");
  const auto t0 = Clock::now();
  ToneCorpusSpec ts;
  ts.seed = 7;
  const Manifest m = write_tone_corpus(ts, dir.string());
  ExperimentConfig cfg = config_from_json({{"seed", 7}, {"label", "gaussian-qkl"}});
  const Corpus corpus = load_corpus(m, cfg);
  const ResultRow row = run_experiment(cfg, corpus);
  const double t = seconds_since(t0);
  const ResultRow null = run_experiment(cfg, with_shuffled_labels(corpus, 77));
  const double n = static_cast<double>(corpus.size());
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  const bool pass = row.mean_accuracy >= 0.9 && t < 300.0 && std::abs(null.mean_accuracy - 0.25) <= 3 * sigma;
  return {pass, "4x60 tones at 10 dB, 10-fold accuracy " + fmt("%.4f", row.mean_accuracy) + " in " + fmt("%.1f", t) +
                    " s; shuffled " + fmt("%.4f", null.mean_accuracy) + " (3 sigma band " + fmt("%.3f", 0.25 - 3 * sigma) +
                    ".." + fmt("%.3f", 0.25 + 3 * sigma) + ")"};
}

std::vector<ExperimentConfig> ordering_configs() {
  using nlohmann::json;
  const json common = {{"seed", 1}, {"encoding", {{"num_qubits", 2}}}, {"features", {{"num_features", 2}}}};
  json g = common, l = common, c = common;
  g["label"] = "gaussian-qkl";
  g["kernel"] = {{"kind", "quantum_projected_gaussian"}};
  l["label"] = "linear-qkl";
  l["kernel"] = {{"kind", "classical_linear"}, {"input", "embedding"}};
  c["label"] = "cosine-metric";
  c["kernel"] = {{"kind", "classical_cosine"}, {"input", "features"}};
  c["metric"] = {{"enabled", true}};
  return {config_from_json(g), config_from_json(l), config_from_json(c)};
}

Outcome table_ordering() {
  RadialCorpusSpec rs;
  rs.seed = 1;
  const RadialCorpus rc = radial_corpus(rs);
  const ResultTable t = compare_kernels(ordering_configs(), corpus_from_cache(rc.manifest, rc.features));
  const double g = t.rows[0].mean_accuracy, l = t.rows[1].mean_accuracy, c = t.rows[2].mean_accuracy;
  return {g >= l && l >= c, "radial 3x60: gaussian-qkl " + fmt("%.4f", g) + " >= linear-qkl " + fmt("%.4f", l) +
                                " >= cosine-metric " + fmt("%.4f", c)};
}

Outcome determinism() {
  const fs::path dir = scratch("rerun");
  RadialCorpusSpec rs;
  rs.per_class = 30;
  rs.seed = 9;
  write_radial_corpus(rs, (dir / "radial").string());
  ToneCorpusSpec ts;
  ts.per_class = 12;
  ts.seed = 9;
  write_tone_corpus(ts, (dir / "tones").string());

  std::vector<std::pair<std::string, RunRecord>> runs;
  {
    RunRecord r;
    r.command = "cv";
    r.manifest = (dir / "tones" / "manifest.csv").string();
    r.configs = {config_from_json({{"seed", 11}, {"protocol", {{"k", 4}}}})};
    runs.emplace_back("cv-audio", r);
  }
  {
    RunRecord r;
    r.command = "compare";
    r.manifest = (dir / "radial" / "manifest.csv").string();
    r.features = (dir / "radial" / "features.qfeat").string();
    r.configs = ordering_configs();
    runs.emplace_back("compare", r);
  }
  {
    RunRecord r;
    r.command = "sweep";
    r.manifest = (dir / "radial" / "manifest.csv").string();
    r.features = (dir / "radial" / "features.qfeat").string();
    ExperimentConfig c = ordering_configs().front();
    c.protocol.kind = ProtocolKind::Sweep;
    c.protocol.sizes = {9, 30, 72};
    r.configs = {c};
    runs.emplace_back("sweep", r);
  }

  bool pass = true;
  std::string detail;
  for (const auto& [name, rec] : runs) {
    const fs::path first = dir / (name + "-1"), second = dir / (name + "-2");
    emit_outputs(execute_record(rec), first.string(), rec);
    const RunRecord back = RunRecord::from_json(nlohmann::json::parse(slurp(first / "run_record.json")));
    emit_outputs(execute_record(back), second.string(), back);
    const bool same = slurp(first / "results.csv") == slurp(second / "results.csv");
    pass = pass && same;
    detail += (detail.empty() ? "" : ", ") + name + (same ? " identical" : " DIFFERS");
  }
  return {pass, "rerun from run_record.json: " + detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"simulator matches Kronecker oracle", simulator_oracle},
      {"analytic single-qubit kernel values", analytic_kernels},
      {"Gram validity (symmetric, unit diagonal, PSD)", gram_validity},
      {"SMO matches brute-force dual; XOR flip", svm_oracle},
      {"loss gradients match finite differences", gradient_checks},
      {"shot estimates converge", shot_convergence},
      {"end-to-end synthetic commands", end_to_end},
      {"kernel ordering on radial corpus", table_ordering},
      {"rerun determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("AC%zu %s: %s -- %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

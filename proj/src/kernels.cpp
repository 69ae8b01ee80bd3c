#include "qkl/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "qkl/binary_io.hpp"

namespace qkl {

namespace {

// Shot-mode seed streams.
constexpr std::uint64_t kStreamFidelityGram = 0;
constexpr std::uint64_t kStreamFidelityCross = 1;
constexpr std::uint64_t kStreamBlochTrain = 2;
constexpr std::uint64_t kStreamBlochTest = 3;

double gaussian_of_sqdist(double gamma, double sqdist) { return std::exp(-gamma * sqdist); }

double overlap_to_kernel(double overlap_sq, bool squared) {
  overlap_sq = std::clamp(overlap_sq, 0.0, 1.0);
  return squared ? overlap_sq : std::sqrt(overlap_sq);
}

// Whatever a kernel compares, computed once per sample.
struct Representation {
  std::vector<StateVector> states;  // fidelity
  Eigen::MatrixXd vectors;          // Bloch vectors or classical inputs, one row per sample
};

Representation represent(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X,
                         const SampleMode& mode, std::uint64_t bloch_stream) {
  Representation r;
  const Eigen::Index n = X.rows();
  switch (kind.variant) {
    case KernelVariant::QuantumFidelity:
      r.states.reserve(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) r.states.push_back(encode(spec, X.row(i).transpose()));
      break;
    case KernelVariant::QuantumProjectedGaussian:
      r.vectors.resize(n, 3 * spec.num_qubits);
      for (Eigen::Index i = 0; i < n; ++i) {
        const StateVector s = encode(spec, X.row(i).transpose());
        if (mode.is_exact()) {
          r.vectors.row(i) = bloch_vectors(s).transpose();
        } else {
          const auto seed = derive_seed(mode.seed, {bloch_stream, static_cast<std::uint64_t>(i)});
          r.vectors.row(i) = sample_bloch_vectors(s, mode.shots, seed).transpose();
        }
      }
      break;
    default:
      if (!X.allFinite()) throw DataError("kernel input contains non-finite values");
      r.vectors = X;
      break;
  }
  return r;
}

double classical_pair(const KernelKind& kind, const Eigen::Ref<const Eigen::VectorXd>& a,
                      const Eigen::Ref<const Eigen::VectorXd>& b) {
  switch (kind.variant) {
    case KernelVariant::ClassicalRbf:
    case KernelVariant::QuantumProjectedGaussian:
      return gaussian_of_sqdist(kind.gamma, (a - b).squaredNorm());
    case KernelVariant::ClassicalLinear:
      return a.dot(b);
    case KernelVariant::ClassicalCosine: {
      const double na = a.norm(), nb = b.norm();
      if (na == 0.0 || nb == 0.0) throw UsageError("cosine kernel of a zero vector");
      return a.dot(b) / (na * nb);
    }
    case KernelVariant::QuantumFidelity:
      break;
  }
  throw UsageError("classical_pair called with the fidelity kernel");
}

double fidelity_pair(const KernelKind& kind, const StateVector& a, const StateVector& b, const SampleMode& mode,
                     std::uint64_t stream, std::uint64_t i, std::uint64_t j) {
  const double p = std::norm(inner_product(a, b));
  if (mode.is_exact()) return overlap_to_kernel(p, kind.fidelity_squared);
  // Compute-uncompute estimate: fraction of all-zero outcomes of U(x_j)^dagger U(x_i)|0>.
  Rng rng(derive_seed(mode.seed, {stream, i, j}));
  std::binomial_distribution<std::uint64_t> draw(mode.shots, std::clamp(p, 0.0, 1.0));
  return overlap_to_kernel(static_cast<double>(draw(rng)) / static_cast<double>(mode.shots), kind.fidelity_squared);
}

void check_inputs(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X, const char* what) {
  kind.validate();
  if (X.rows() == 0) throw UsageError(std::string(what) + " is empty");
  if (kind.is_quantum()) {
    spec.validate();
    if (X.cols() != spec.num_qubits) {
      throw UsageError(std::string(what) + " has dimension " + std::to_string(X.cols()) + ", encoder expects " +
                       std::to_string(spec.num_qubits));
    }
  }
}

}  // namespace

std::string variant_name(KernelVariant v) {
  switch (v) {
    case KernelVariant::QuantumFidelity: return "quantum_fidelity";
    case KernelVariant::QuantumProjectedGaussian: return "quantum_projected_gaussian";
    case KernelVariant::ClassicalRbf: return "classical_rbf";
    case KernelVariant::ClassicalLinear: return "classical_linear";
    case KernelVariant::ClassicalCosine: return "classical_cosine";
  }
  return "unknown";
}

KernelVariant parse_variant(const std::string& name) {
  for (auto v : {KernelVariant::QuantumFidelity, KernelVariant::QuantumProjectedGaussian, KernelVariant::ClassicalRbf,
                 KernelVariant::ClassicalLinear, KernelVariant::ClassicalCosine}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown kernel kind '" + name + "'");
}

void KernelKind::validate() const {
  if (uses_gamma() && !(gamma > 0.0 && std::isfinite(gamma))) throw ConfigError("kernel gamma must be > 0");
}

std::string KernelKind::tag() const {
  std::ostringstream os;
  os.precision(17);
  os << variant_name(variant);
  if (uses_gamma()) os << ":gamma=" << gamma;
  if (variant == KernelVariant::QuantumFidelity && fidelity_squared) os << ":squared";
  return os.str();
}

KernelKind KernelKind::parse_tag(const std::string& tag) {
  std::istringstream is(tag);
  std::string part;
  std::getline(is, part, ':');
  KernelKind k;
  k.variant = parse_variant(part);
  while (std::getline(is, part, ':')) {
    if (part == "squared") {
      k.fidelity_squared = true;
    } else if (part.rfind("gamma=", 0) == 0) {
      k.gamma = std::strtod(part.c_str() + 6, nullptr);
    } else {
      throw DataError("unrecognised kernel tag field '" + part + "'");
    }
  }
  k.validate();
  return k;
}

double fidelity_kernel(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                       const Eigen::Ref<const Eigen::VectorXd>& xj, bool squared) {
  const double p = std::norm(inner_product(encode(spec, xi), encode(spec, xj)));
  return overlap_to_kernel(p, squared);
}

double projected_gaussian_kernel(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                                 const Eigen::Ref<const Eigen::VectorXd>& xj, double gamma) {
  if (!(gamma > 0.0)) throw UsageError("gamma must be > 0");
  const Eigen::VectorXd bi = bloch_vectors(encode(spec, xi));
  const Eigen::VectorXd bj = bloch_vectors(encode(spec, xj));
  return gaussian_of_sqdist(gamma, (bi - bj).squaredNorm());
}

double classical_kernel(const KernelKind& kind, const Eigen::Ref<const Eigen::VectorXd>& yi,
                        const Eigen::Ref<const Eigen::VectorXd>& yj) {
  if (kind.is_quantum()) throw UsageError("classical_kernel called with a quantum kernel kind");
  kind.validate();
  if (yi.size() != yj.size()) throw UsageError("classical kernel inputs differ in dimension");
  return classical_pair(kind, yi, yj);
}

double kernel_value(const KernelKind& kind, const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                    const Eigen::Ref<const Eigen::VectorXd>& xj) {
  switch (kind.variant) {
    case KernelVariant::QuantumFidelity: return fidelity_kernel(spec, xi, xj, kind.fidelity_squared);
    case KernelVariant::QuantumProjectedGaussian: return projected_gaussian_kernel(spec, xi, xj, kind.gamma);
    default: return classical_kernel(kind, xi, xj);
  }
}

GramMatrix gram_matrix(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X,
                       const SampleMode& mode, std::vector<std::string> row_ids) {
  check_inputs(kind, spec, X, "Gram input");
  if (mode.sampled && mode.shots == 0) throw UsageError("shot count must be >= 1");
  const Eigen::Index n = X.rows();
  if (!row_ids.empty() && static_cast<Eigen::Index>(row_ids.size()) != n) {
    throw UsageError("row_ids length does not match the number of samples");
  }
  const Representation rep = represent(kind, spec, X, mode, kStreamBlochTrain);

  GramMatrix g;
  g.kind = kind;
  g.provenance = kind.is_quantum() ? mode : SampleMode::exact();
  g.row_ids = std::move(row_ids);
  if (g.row_ids.empty()) {
    for (Eigen::Index i = 0; i < n; ++i) g.row_ids.push_back(std::to_string(i));
  }
  g.values.resize(n, n);

  const bool fidelity = kind.variant == KernelVariant::QuantumFidelity;
  // Validate cosine inputs up front; no exceptions may leave the parallel region.
  if (kind.variant == KernelVariant::ClassicalCosine && (rep.vectors.rowwise().norm().array() == 0.0).any()) {
    throw UsageError("cosine kernel of a zero vector");
  }
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double v;
      if (fidelity) {
        v = fidelity_pair(kind, rep.states[static_cast<std::size_t>(i)], rep.states[static_cast<std::size_t>(j)],
                          g.provenance, kStreamFidelityGram, static_cast<std::uint64_t>(i),
                          static_cast<std::uint64_t>(j));
      } else {
        v = classical_pair(kind, rep.vectors.row(i).transpose(), rep.vectors.row(j).transpose());
      }
      g.values(i, j) = v;
      g.values(j, i) = v;
    }
  }
  return g;
}

Eigen::MatrixXd cross_gram(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X_train,
                           const Eigen::MatrixXd& X_test, const SampleMode& mode) {
  check_inputs(kind, spec, X_train, "training set");
  check_inputs(kind, spec, X_test, "test set");
  if (X_train.cols() != X_test.cols()) throw UsageError("train and test inputs differ in dimension");
  if (mode.sampled && mode.shots == 0) throw UsageError("shot count must be >= 1");
  const SampleMode m = kind.is_quantum() ? mode : SampleMode::exact();
  const Representation train = represent(kind, spec, X_train, m, kStreamBlochTrain);
  const Representation test = represent(kind, spec, X_test, m, kStreamBlochTest);
  if (kind.variant == KernelVariant::ClassicalCosine &&
      ((train.vectors.rowwise().norm().array() == 0.0).any() || (test.vectors.rowwise().norm().array() == 0.0).any())) {
    throw UsageError("cosine kernel of a zero vector");
  }

  const Eigen::Index nt = X_test.rows(), nr = X_train.rows();
  Eigen::MatrixXd out(nt, nr);
  const bool fidelity = kind.variant == KernelVariant::QuantumFidelity;
#pragma omp parallel for schedule(dynamic)
  for (Eigen::Index t = 0; t < nt; ++t) {
    for (Eigen::Index i = 0; i < nr; ++i) {
      out(t, i) = fidelity ? fidelity_pair(kind, test.states[static_cast<std::size_t>(t)],
                                           train.states[static_cast<std::size_t>(i)], m, kStreamFidelityCross,
                                           static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i))
                           : classical_pair(kind, test.vectors.row(t).transpose(), train.vectors.row(i).transpose());
    }
  }
  return out;
}

double min_eigenvalue(const Eigen::MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(symmetric, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("eigenvalue decomposition failed");
  return solver.eigenvalues().minCoeff();
}

GramDiagnostics diagnose(const GramMatrix& gram) {
  GramDiagnostics d;
  const Eigen::MatrixXd& k = gram.values;
  d.finite = k.allFinite();
  if (!d.finite) return d;
  d.max_asymmetry = (k - k.transpose()).cwiseAbs().maxCoeff();
  if (gram.kind.unit_diagonal()) d.max_diagonal_deviation = (k.diagonal().array() - 1.0).abs().maxCoeff();
  const Eigen::MatrixXd sym = 0.5 * (k + k.transpose());
  d.min_eigenvalue = min_eigenvalue(sym);
  return d;
}

void check_gram(const GramMatrix& gram, double eig_floor) {
  if (gram.values.rows() != gram.values.cols()) throw UsageError("Gram matrix is not square");
  const GramDiagnostics d = diagnose(gram);
  if (!d.finite) throw DataError("Gram matrix contains non-finite entries");
  if (d.max_asymmetry > 1e-9) throw NumericError("Gram matrix asymmetric by " + std::to_string(d.max_asymmetry));
  if (d.max_diagonal_deviation > 1e-9) {
    throw NumericError("Gram diagonal deviates from 1 by " + std::to_string(d.max_diagonal_deviation));
  }
  if (d.min_eigenvalue < eig_floor) {
    throw NumericError("Gram matrix minimum eigenvalue " + std::to_string(d.min_eigenvalue) + " below " +
                       std::to_string(eig_floor));
  }
}

SampleMode parse_provenance(const std::string& text) {
  if (text == "exact") return SampleMode::exact();
  unsigned long long n = 0, seed = 0;
  if (std::sscanf(text.c_str(), "shots:n=%llu,seed=%llu", &n, &seed) != 2 || n == 0) {
    throw DataError("unrecognised provenance '" + text + "'");
  }
  return SampleMode::with_shots(n, seed);
}

void save_gram(const GramMatrix& gram, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  const auto n = static_cast<std::uint64_t>(gram.values.rows());
  binio::write_magic(out, "QGRAM1");
  binio::write_u64(out, n);
  binio::write_text(out, gram.kind.tag());
  binio::write_text(out, gram.provenance.describe());
  for (Eigen::Index i = 0; i < gram.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < gram.values.cols(); ++j) binio::write_f64(out, gram.values(i, j));
  }
  if (!out) throw DataError("failed writing " + path);
}

GramMatrix load_gram(const std::string& path, std::optional<Eigen::Index> expected_n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  binio::expect_magic(in, "QGRAM1", path);
  const std::uint64_t n = binio::read_u64(in, path);
  if (n == 0 || n > (1u << 16)) throw DataError(path + ": implausible Gram size " + std::to_string(n));
  if (expected_n && static_cast<std::uint64_t>(*expected_n) != n) {
    throw DataError(path + ": Gram size " + std::to_string(n) + " does not match expected " +
                    std::to_string(*expected_n));
  }
  GramMatrix g;
  g.kind = KernelKind::parse_tag(binio::read_text(in, path));
  g.provenance = parse_provenance(binio::read_text(in, path));
  const auto dim = static_cast<Eigen::Index>(n);
  g.values.resize(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) g.values(i, j) = binio::read_f64(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path + ": trailing bytes after Gram data");
  for (Eigen::Index i = 0; i < dim; ++i) g.row_ids.push_back(std::to_string(i));
  return g;
}

}  // namespace qkl

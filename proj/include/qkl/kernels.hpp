#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "qkl/encoding.hpp"

namespace qkl {

enum class KernelVariant {
  QuantumFidelity,           // |<phi(x)|phi(x')>|, or its square
  QuantumProjectedGaussian,  // exp(-gamma * sum_k ||bloch_k(x) - bloch_k(x')||^2)
  ClassicalRbf,
  ClassicalLinear,
  ClassicalCosine,
};

struct KernelKind {
  KernelVariant variant = KernelVariant::QuantumProjectedGaussian;
  double gamma = 1.0;
  bool fidelity_squared = false;

  static KernelKind fidelity(bool squared = false) { return {KernelVariant::QuantumFidelity, 1.0, squared}; }
  static KernelKind projected_gaussian(double gamma = 1.0) { return {KernelVariant::QuantumProjectedGaussian, gamma, false}; }
  static KernelKind rbf(double gamma = 1.0) { return {KernelVariant::ClassicalRbf, gamma, false}; }
  static KernelKind linear() { return {KernelVariant::ClassicalLinear, 1.0, false}; }
  static KernelKind cosine() { return {KernelVariant::ClassicalCosine, 1.0, false}; }

  bool is_quantum() const {
    return variant == KernelVariant::QuantumFidelity || variant == KernelVariant::QuantumProjectedGaussian;
  }
  bool unit_diagonal() const { return variant != KernelVariant::ClassicalLinear; }
  bool uses_gamma() const {
    return variant == KernelVariant::QuantumProjectedGaussian || variant == KernelVariant::ClassicalRbf;
  }
  void validate() const;
  // e.g. "quantum_projected_gaussian:gamma=1"; round-trips through parse_tag.
  std::string tag() const;
  static KernelKind parse_tag(const std::string& tag);

  bool operator==(const KernelKind&) const = default;
};

std::string variant_name(KernelVariant v);
KernelVariant parse_variant(const std::string& name);

struct GramMatrix {
  Eigen::MatrixXd values;
  KernelKind kind;
  std::vector<std::string> row_ids;
  SampleMode provenance;

  Eigen::Index size() const { return values.rows(); }
};

double fidelity_kernel(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                       const Eigen::Ref<const Eigen::VectorXd>& xj, bool squared = false);

double projected_gaussian_kernel(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                                 const Eigen::Ref<const Eigen::VectorXd>& xj, double gamma = 1.0);

// Classical kinds only; quantum kinds are a usage error here.
double classical_kernel(const KernelKind& kind, const Eigen::Ref<const Eigen::VectorXd>& yi,
                        const Eigen::Ref<const Eigen::VectorXd>& yj);

// Exact evaluation of any kind on one pair.
double kernel_value(const KernelKind& kind, const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& xi,
                    const Eigen::Ref<const Eigen::VectorXd>& xj);

// Rows of X are samples. Quantum kinds encode each row once; only the upper
// triangle is evaluated and then mirrored.
GramMatrix gram_matrix(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X,
                       const SampleMode& mode = SampleMode::exact(), std::vector<std::string> row_ids = {});

// Entry (t, i) = k(test_t, train_i). Shot-mode train-side estimates match the
// ones gram_matrix uses for the same seed.
Eigen::MatrixXd cross_gram(const KernelKind& kind, const EncodingSpec& spec, const Eigen::MatrixXd& X_train,
                           const Eigen::MatrixXd& X_test, const SampleMode& mode = SampleMode::exact());

struct GramDiagnostics {
  double max_asymmetry = 0.0;
  double max_diagonal_deviation = 0.0;  // from 1; zero for kinds without a unit diagonal
  double min_eigenvalue = 0.0;
  bool finite = true;
};

double min_eigenvalue(const Eigen::MatrixXd& symmetric);
GramDiagnostics diagnose(const GramMatrix& gram);

// Throws NumericError when symmetry (1e-9), unit diagonal (1e-9) or the
// eigenvalue floor is violated.
void check_gram(const GramMatrix& gram, double eig_floor = -1e-7);

// Binary layout: "QGRAM1", u64 N, text kind tag, text provenance, N*N f64
// row-major. Integers and floats little-endian, text u64-length-prefixed.
void save_gram(const GramMatrix& gram, const std::string& path);
GramMatrix load_gram(const std::string& path, std::optional<Eigen::Index> expected_n = std::nullopt);

SampleMode parse_provenance(const std::string& text);

}  // namespace qkl

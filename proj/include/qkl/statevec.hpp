#pragma once

// Dense state-vector simulator. Basis ordering: qubit q is bit q of the
// amplitude index, qubit 0 least significant.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>

#include "qkl/errors.hpp"

namespace qkl {

inline constexpr int kMaxQubits = 20;

enum class GateKind { RY, RZ, CZ, CNOT, H };

struct Gate {
  GateKind kind = GateKind::H;
  int target = 0;
  std::optional<int> control;
  double angle = 0.0;

  static Gate ry(int target, double angle) { return {GateKind::RY, target, std::nullopt, angle}; }
  static Gate rz(int target, double angle) { return {GateKind::RZ, target, std::nullopt, angle}; }
  static Gate h(int target) { return {GateKind::H, target, std::nullopt, 0.0}; }
  static Gate cz(int a, int b) { return {GateKind::CZ, b, a, 0.0}; }
  static Gate cnot(int control, int target) { return {GateKind::CNOT, target, control, 0.0}; }

  bool two_qubit() const { return kind == GateKind::CZ || kind == GateKind::CNOT; }
};

template <typename Scalar>
class BasicStateVector {
 public:
  using Complex = std::complex<Scalar>;
  using Amplitudes = Eigen::Matrix<Complex, Eigen::Dynamic, 1>;

  BasicStateVector() = default;

  // |0...0> on num_qubits qubits.
  explicit BasicStateVector(int num_qubits) : num_qubits_(num_qubits) {
    if (num_qubits < 1 || num_qubits > kMaxQubits) {
      throw ConfigError("qubit count " + std::to_string(num_qubits) + " outside [1, " +
                        std::to_string(kMaxQubits) + "]");
    }
    amplitudes_ = Amplitudes::Zero(Eigen::Index{1} << num_qubits);
    amplitudes_(0) = Complex(1, 0);
  }

  BasicStateVector(int num_qubits, Amplitudes amplitudes)
      : num_qubits_(num_qubits), amplitudes_(std::move(amplitudes)) {
    if (num_qubits < 1 || num_qubits > kMaxQubits) {
      throw ConfigError("qubit count " + std::to_string(num_qubits) + " outside [1, " +
                        std::to_string(kMaxQubits) + "]");
    }
    if (amplitudes_.size() != (Eigen::Index{1} << num_qubits)) {
      throw UsageError("amplitude vector length does not equal 2^Q");
    }
  }

  int num_qubits() const { return num_qubits_; }
  Eigen::Index dim() const { return amplitudes_.size(); }
  const Amplitudes& amplitudes() const { return amplitudes_; }
  Scalar norm() const { return amplitudes_.norm(); }

  // In-place application; apply_gate() below is the value-returning form.
  void apply(const Gate& gate);

 private:
  void check_gate(const Gate& gate) const;
  void apply_1q(int target, const Eigen::Matrix<Complex, 2, 2>& m);

  int num_qubits_ = 0;
  Amplitudes amplitudes_;
};

using StateVector = BasicStateVector<double>;

template <typename Scalar>
Eigen::Matrix<std::complex<Scalar>, 2, 2> gate_matrix_1q(const Gate& gate) {
  using C = std::complex<Scalar>;
  Eigen::Matrix<C, 2, 2> m;
  const Scalar half = static_cast<Scalar>(gate.angle) / Scalar(2);
  switch (gate.kind) {
    case GateKind::RY: {
      const Scalar c = std::cos(half), s = std::sin(half);
      m << C(c, 0), C(-s, 0), C(s, 0), C(c, 0);
      break;
    }
    case GateKind::RZ:
      m << std::polar(Scalar(1), -half), C(0, 0), C(0, 0), std::polar(Scalar(1), half);
      break;
    case GateKind::H: {
      const Scalar r = Scalar(1) / std::sqrt(Scalar(2));
      m << C(r, 0), C(r, 0), C(r, 0), C(-r, 0);
      break;
    }
    default:
      throw UsageError("gate_matrix_1q called with a two-qubit gate");
  }
  return m;
}

template <typename Scalar>
void BasicStateVector<Scalar>::check_gate(const Gate& gate) const {
  auto in_range = [this](int q) { return q >= 0 && q < num_qubits_; };
  if (!in_range(gate.target)) {
    throw UsageError("gate target " + std::to_string(gate.target) + " out of range for " +
                     std::to_string(num_qubits_) + " qubits");
  }
  if (gate.two_qubit()) {
    if (!gate.control || !in_range(*gate.control)) {
      throw UsageError("two-qubit gate needs a control qubit in range");
    }
    if (*gate.control == gate.target) throw UsageError("control equals target");
  } else if (!std::isfinite(gate.angle)) {
    throw UsageError("rotation angle is not finite");
  }
}

template <typename Scalar>
void BasicStateVector<Scalar>::apply_1q(int target, const Eigen::Matrix<Complex, 2, 2>& m) {
  const Eigen::Index stride = Eigen::Index{1} << target;
  const Eigen::Index n = dim();
  Complex* a = amplitudes_.data();
  for (Eigen::Index base = 0; base < n; base += 2 * stride) {
    for (Eigen::Index i = base; i < base + stride; ++i) {
      const Complex a0 = a[i];
      const Complex a1 = a[i + stride];
      a[i] = m(0, 0) * a0 + m(0, 1) * a1;
      a[i + stride] = m(1, 0) * a0 + m(1, 1) * a1;
    }
  }
}

template <typename Scalar>
void BasicStateVector<Scalar>::apply(const Gate& gate) {
  check_gate(gate);
  const Eigen::Index n = dim();
  switch (gate.kind) {
    case GateKind::RY:
    case GateKind::RZ:
    case GateKind::H:
      apply_1q(gate.target, gate_matrix_1q<Scalar>(gate));
      break;
    case GateKind::CZ: {
      const Eigen::Index mask = (Eigen::Index{1} << gate.target) | (Eigen::Index{1} << *gate.control);
      for (Eigen::Index i = 0; i < n; ++i) {
        if ((i & mask) == mask) amplitudes_(i) = -amplitudes_(i);
      }
      break;
    }
    case GateKind::CNOT: {
      const Eigen::Index c = Eigen::Index{1} << *gate.control;
      const Eigen::Index t = Eigen::Index{1} << gate.target;
      for (Eigen::Index i = 0; i < n; ++i) {
        if ((i & c) && !(i & t)) std::swap(amplitudes_(i), amplitudes_(i | t));
      }
      break;
    }
  }
}

template <typename Scalar = double>
BasicStateVector<Scalar> zero_state(int num_qubits) {
  return BasicStateVector<Scalar>(num_qubits);
}

template <typename Scalar>
BasicStateVector<Scalar> apply_gate(BasicStateVector<Scalar> state, const Gate& gate) {
  state.apply(gate);
  return state;
}

// <Z_q> for every qubit q.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> pauli_z_expectations(const BasicStateVector<Scalar>& state) {
  const int nq = state.num_qubits();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> z = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(nq);
  const auto& a = state.amplitudes();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const Scalar p = std::norm(a(i));
    for (int q = 0; q < nq; ++q) z(q) += ((i >> q) & 1) ? -p : p;
  }
  return z;
}

template <typename Scalar>
std::complex<Scalar> inner_product(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b) {
  if (a.num_qubits() != b.num_qubits()) throw UsageError("inner product of states with different qubit counts");
  return a.amplitudes().dot(b.amplitudes());  // Eigen's dot conjugates the left operand
}

// |<a|b>|, clamped to [0, 1].
template <typename Scalar>
Scalar overlap_magnitude(const BasicStateVector<Scalar>& a, const BasicStateVector<Scalar>& b) {
  return std::min(Scalar(1), std::abs(inner_product(a, b)));
}

template <typename Scalar>
struct BasicDensityMatrix1Q {
  Eigen::Matrix<std::complex<Scalar>, 2, 2> entries;
  int qubit = 0;
};

using DensityMatrix1Q = BasicDensityMatrix1Q<double>;

// Partial trace of |psi><psi| over every qubit except `qubit`.
template <typename Scalar>
BasicDensityMatrix1Q<Scalar> reduced_density_matrix(const BasicStateVector<Scalar>& state, int qubit) {
  if (qubit < 0 || qubit >= state.num_qubits()) {
    throw UsageError("reduced density matrix qubit " + std::to_string(qubit) + " out of range");
  }
  using C = std::complex<Scalar>;
  const Eigen::Index stride = Eigen::Index{1} << qubit;
  const auto& a = state.amplitudes();
  Scalar p0 = 0, p1 = 0;
  C off(0, 0);
  for (Eigen::Index base = 0; base < a.size(); base += 2 * stride) {
    for (Eigen::Index i = base; i < base + stride; ++i) {
      p0 += std::norm(a(i));
      p1 += std::norm(a(i + stride));
      off += a(i) * std::conj(a(i + stride));
    }
  }
  BasicDensityMatrix1Q<Scalar> rho;
  rho.qubit = qubit;
  rho.entries << C(p0, 0), off, std::conj(off), C(p1, 0);
  return rho;
}

// (Tr[X rho], Tr[Y rho], Tr[Z rho]).
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> pauli_expectations_1q(const BasicDensityMatrix1Q<Scalar>& rho) {
  using C = std::complex<Scalar>;
  const auto& r = rho.entries;
  const C x = r(0, 1) + r(1, 0);
  const C y = C(0, 1) * (r(0, 1) - r(1, 0));
  const C z = r(0, 0) - r(1, 1);
  return {x.real(), y.real(), z.real()};
}

// Per-qubit Bloch vectors stacked as [x_0, y_0, z_0, x_1, ...], length 3Q.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bloch_vectors(const BasicStateVector<Scalar>& state) {
  const int nq = state.num_qubits();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(3 * nq);
  for (int q = 0; q < nq; ++q) {
    out.template segment<3>(3 * q) = pauli_expectations_1q(reduced_density_matrix(state, q));
  }
  return out;
}

}  // namespace qkl

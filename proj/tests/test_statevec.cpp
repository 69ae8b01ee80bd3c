#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "qkl/errors.hpp"
#include "qkl/statevec.hpp"

using namespace qkl;
using std::numbers::pi;

namespace {

double max_diff(const StateVector::Amplitudes& a, const oracle::VecX& b) { return (a - b).cwiseAbs().maxCoeff(); }

StateVector run(int nq, const std::vector<Gate>& gates) {
  StateVector s(nq);
  for (const auto& g : gates) s.apply(g);
  return s;
}

}  // namespace

TEST_CASE("zero state") {
  const auto s = zero_state(2);
  CHECK(s.dim() == 4);
  CHECK(s.amplitudes()(0) == std::complex<double>(1, 0));
  CHECK(s.amplitudes().tail(3).cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero_state(1).dim() == 2);
  CHECK_THROWS_AS(zero_state(21), ConfigError);
  CHECK_THROWS_AS(zero_state(0), ConfigError);
}

TEST_CASE("single gates") {
  auto s = apply_gate(zero_state(1), Gate::ry(0, pi));
  CHECK(std::abs(s.amplitudes()(0)) < 1e-12);
  CHECK(std::abs(s.amplitudes()(1) - 1.0) < 1e-12);

  auto cz = apply_gate(zero_state(2), Gate::cz(0, 1));
  CHECK(max_diff(cz.amplitudes(), oracle::run(2, {})) == 0.0);

  // |01> (qubit 0 set) -> CNOT(0 -> 1) -> |11>
  auto x = apply_gate(apply_gate(zero_state(2), Gate::ry(0, pi)), Gate::cnot(0, 1));
  CHECK(std::abs(std::abs(x.amplitudes()(3)) - 1.0) < 1e-12);
  CHECK(max_diff(x.amplitudes(), oracle::run(2, {Gate::ry(0, pi), Gate::cnot(0, 1)})) < 1e-12);
}

TEST_CASE("invalid gate indices") {
  StateVector s(2);
  CHECK_THROWS_AS(s.apply(Gate::ry(2, 0.1)), UsageError);
  CHECK_THROWS_AS(s.apply(Gate::cnot(1, 1)), UsageError);
  CHECK_THROWS_AS(s.apply(Gate::cz(-1, 0)), UsageError);
  CHECK_THROWS_AS(s.apply(Gate::rz(0, std::nan(""))), UsageError);
}

TEST_CASE("Kronecker oracle on random circuits") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    const int nq = 1 + trial % 4;
    const auto gates = oracle::random_circuit(nq, 1 + trial % 20, rng);
    CHECK(max_diff(run(nq, gates).amplitudes(), oracle::run(nq, gates)) < 1e-10);
  }
}

TEST_CASE("norm preservation") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const int nq = 1 + trial % 6;
    const auto s = run(nq, oracle::random_circuit(nq, 50, rng));
    CHECK(std::abs(s.norm() - 1.0) < 1e-10);
  }
}

TEST_CASE("Z expectations") {
  CHECK(pauli_z_expectations(zero_state(3)).isApprox(Eigen::Vector3d(1, 1, 1)));
  CHECK(pauli_z_expectations(apply_gate(zero_state(1), Gate::ry(0, pi)))(0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::abs(pauli_z_expectations(apply_gate(zero_state(1), Gate::ry(0, pi / 2)))(0)) < 1e-12);
}

TEST_CASE("overlaps") {
  std::mt19937_64 rng(5);
  const auto s = run(3, oracle::random_circuit(3, 15, rng));
  CHECK(overlap_magnitude(s, s) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(overlap_magnitude(zero_state(1), apply_gate(zero_state(1), Gate::ry(0, pi))) < 1e-12);
  const auto a = apply_gate(zero_state(1), Gate::ry(0, 0.0));
  const auto b = apply_gate(zero_state(1), Gate::ry(0, pi / 2));
  CHECK(overlap_magnitude(a, b) == doctest::Approx(std::cos(pi / 4)).epsilon(1e-12));
  CHECK_THROWS_AS(overlap_magnitude(zero_state(1), zero_state(2)), UsageError);

  // Unitarity: the same circuit on both sides leaves the overlap unchanged.
  const auto u = run(3, oracle::random_circuit(3, 10, rng));
  const auto v = run(3, oracle::random_circuit(3, 10, rng));
  const auto extra = oracle::random_circuit(3, 12, rng);
  auto u2 = u, v2 = v;
  for (const auto& g : extra) {
    u2.apply(g);
    v2.apply(g);
  }
  CHECK(std::abs(overlap_magnitude(u, v) - overlap_magnitude(u2, v2)) < 1e-10);
}

TEST_CASE("reduced density matrices") {
  const auto r0 = reduced_density_matrix(zero_state(2), 0);
  CHECK(std::abs(r0.entries(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(r0.entries(1, 1)) < 1e-12);

  const auto bell = run(2, {Gate::h(0), Gate::cnot(0, 1)});
  const auto rb = reduced_density_matrix(bell, 0);
  const oracle::Mat2 expect = oracle::partial_trace(oracle::run(2, {Gate::h(0), Gate::cnot(0, 1)}), 2, 0);
  CHECK((rb.entries - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(rb.entries(0, 0) - 0.5) < 1e-12);
  CHECK(std::abs(rb.entries(0, 1)) < 1e-12);

  const double th = 0.83;
  const auto rp = reduced_density_matrix(run(2, {Gate::ry(0, th)}), 0);
  const double c = std::cos(th / 2), s = std::sin(th / 2);
  CHECK(std::abs(rp.entries(0, 0) - c * c) < 1e-12);
  CHECK(std::abs(rp.entries(0, 1) - c * s) < 1e-12);
  CHECK(std::abs(rp.entries(1, 1) - s * s) < 1e-12);
  CHECK_THROWS_AS(reduced_density_matrix(zero_state(2), 2), UsageError);

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const int nq = 1 + trial % 4;
    const auto gates = oracle::random_circuit(nq, 12, rng);
    const auto st = run(nq, gates);
    const auto z = pauli_z_expectations(st);
    for (int q = 0; q < nq; ++q) {
      const auto rho = reduced_density_matrix(st, q);
      CHECK((rho.entries - oracle::partial_trace(oracle::run(nq, gates), nq, q)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((rho.entries - rho.entries.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(std::abs(rho.entries.trace() - 1.0) < 1e-12);
      const Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd>(rho.entries).eigenvalues();
      CHECK(ev.minCoeff() > -1e-10);
      CHECK(ev.maxCoeff() < 1 + 1e-10);
      CHECK(std::abs(pauli_expectations_1q(rho)(2) - z(q)) < 1e-10);
    }
  }
}

TEST_CASE("single-qubit Pauli expectations") {
  DensityMatrix1Q rho;
  rho.entries << 1, 0, 0, 0;
  CHECK(pauli_expectations_1q(rho).isApprox(Eigen::Vector3d(0, 0, 1)));
  rho.entries = Eigen::Matrix2cd::Identity() / 2;
  CHECK(pauli_expectations_1q(rho).norm() < 1e-15);
  const auto plus = reduced_density_matrix(run(1, {Gate::ry(0, pi / 2)}), 0);
  CHECK((pauli_expectations_1q(plus) - Eigen::Vector3d(1, 0, 0)).norm() < 1e-12);

  // <Y> sign: RX-like state from H then RZ(pi/2) points along +Y.
  const auto py = reduced_density_matrix(run(1, {Gate::h(0), Gate::rz(0, pi / 2)}), 0);
  CHECK((pauli_expectations_1q(py) - Eigen::Vector3d(0, 1, 0)).norm() < 1e-12);

  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto st = run(3, oracle::random_circuit(3, 10, rng));
    const auto b = bloch_vectors(st);
    CHECK(b.size() == 9);
    for (int q = 0; q < 3; ++q) CHECK(b.segment<3>(3 * q).squaredNorm() <= 1 + 1e-9);
  }
}

TEST_CASE("float scalar instantiation") {
  BasicStateVector<float> s(2);
  s.apply(Gate::h(0));
  s.apply(Gate::cnot(0, 1));
  CHECK(std::abs(s.norm() - 1.0f) < 1e-6f);
  CHECK(std::abs(std::abs(s.amplitudes()(3)) - float(std::sqrt(0.5))) < 1e-6f);
}

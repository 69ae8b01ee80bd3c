#include "qkl/encoding.hpp"

#include <algorithm>
#include <cmath>

namespace qkl {

std::string to_string(RotationAxis axis) { return axis == RotationAxis::RY ? "RY" : "RY-RZ"; }

std::string to_string(Entangler ent) {
  switch (ent) {
    case Entangler::None: return "none";
    case Entangler::CzRing: return "cz_ring";
    case Entangler::CnotChain: return "cnot_chain";
  }
  return "none";
}

RotationAxis parse_rotation_axis(const std::string& s) {
  if (s == "RY") return RotationAxis::RY;
  if (s == "RY-RZ") return RotationAxis::RYRZ;
  throw ConfigError("unknown rotation_axis '" + s + "' (expected RY or RY-RZ)");
}

Entangler parse_entangler(const std::string& s) {
  if (s == "none") return Entangler::None;
  if (s == "cz_ring") return Entangler::CzRing;
  if (s == "cnot_chain") return Entangler::CnotChain;
  throw ConfigError("unknown entangler '" + s + "' (expected none, cz_ring or cnot_chain)");
}

void EncodingSpec::validate() const {
  if (num_qubits < 1 || num_qubits > kMaxQubits) {
    throw ConfigError("encoding num_qubits must be in [1, " + std::to_string(kMaxQubits) + "]");
  }
  if (depth < 1) throw ConfigError("encoding depth must be >= 1");
  if (!std::isfinite(feature_scale) || feature_scale == 0.0) {
    throw ConfigError("encoding feature_scale must be finite and nonzero");
  }
}

std::string SampleMode::describe() const {
  if (is_exact()) return "exact";
  return "shots:n=" + std::to_string(shots) + ",seed=" + std::to_string(seed);
}

std::vector<Gate> encoding_circuit(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  spec.validate();
  const int nq = spec.num_qubits;
  if (x.size() != nq) {
    throw UsageError("encoder expects " + std::to_string(nq) + " features, got " + std::to_string(x.size()));
  }
  if (!x.allFinite()) throw UsageError("encoder input contains non-finite values");

  std::vector<Gate> gates;
  for (int layer = 0; layer < spec.depth; ++layer) {
    // Without re-uploading, later layers rotate by zero, which is the identity.
    if (layer == 0 || spec.data_reuploading) {
      for (int q = 0; q < nq; ++q) {
        const double angle = spec.feature_scale * x(q);
        gates.push_back(Gate::ry(q, angle));
        if (spec.rotation_axis == RotationAxis::RYRZ) gates.push_back(Gate::rz(q, angle));
      }
    }
    switch (spec.entangler) {
      case Entangler::None:
        break;
      case Entangler::CzRing:
        if (nq == 2) {
          gates.push_back(Gate::cz(0, 1));
        } else if (nq > 2) {
          for (int q = 0; q < nq; ++q) gates.push_back(Gate::cz(q, (q + 1) % nq));
        }
        break;
      case Entangler::CnotChain:
        for (int q = 0; q + 1 < nq; ++q) gates.push_back(Gate::cnot(q, q + 1));
        break;
    }
  }
  return gates;
}

StateVector encode(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x) {
  StateVector state(spec.num_qubits);
  for (const Gate& g : encoding_circuit(spec, x)) state.apply(g);
  return state;
}

Eigen::VectorXd sample_z_means(const StateVector& state, std::uint64_t shots, Rng& rng) {
  if (shots == 0) throw UsageError("shot count must be >= 1");
  const auto& a = state.amplitudes();
  std::vector<double> cdf(static_cast<std::size_t>(a.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    acc += std::norm(a(i));
    cdf[static_cast<std::size_t>(i)] = acc;
  }
  std::uniform_real_distribution<double> uniform(0.0, acc);
  const int nq = state.num_qubits();
  std::vector<std::uint64_t> ones(static_cast<std::size_t>(nq), 0);
  for (std::uint64_t s = 0; s < shots; ++s) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), uniform(rng));
    const auto outcome = static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf.begin(), a.size() - 1));
    for (int q = 0; q < nq; ++q) ones[static_cast<std::size_t>(q)] += (outcome >> q) & 1u;
  }
  Eigen::VectorXd means(nq);
  const double n = static_cast<double>(shots);
  for (int q = 0; q < nq; ++q) means(q) = (n - 2.0 * static_cast<double>(ones[static_cast<std::size_t>(q)])) / n;
  return means;
}

Eigen::VectorXd sample_bloch_vectors(const StateVector& state, std::uint64_t shots, std::uint64_t seed) {
  const int nq = state.num_qubits();
  Rng rng(seed);

  StateVector x_basis = state;
  for (int q = 0; q < nq; ++q) x_basis.apply(Gate::h(q));
  StateVector y_basis = state;
  for (int q = 0; q < nq; ++q) {
    y_basis.apply(Gate::rz(q, -std::numbers::pi / 2));  // S^dagger up to global phase
    y_basis.apply(Gate::h(q));
  }

  const Eigen::VectorXd xs = sample_z_means(x_basis, shots, rng);
  const Eigen::VectorXd ys = sample_z_means(y_basis, shots, rng);
  const Eigen::VectorXd zs = sample_z_means(state, shots, rng);
  Eigen::VectorXd out(3 * nq);
  for (int q = 0; q < nq; ++q) out.segment<3>(3 * q) << xs(q), ys(q), zs(q);
  return out;
}

Embedding measure_embedding(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const SampleMode& mode) {
  if (mode.sampled && mode.shots == 0) throw UsageError("shot count must be >= 1");
  const StateVector state = encode(spec, x);
  Embedding e;
  e.source = mode;
  if (mode.is_exact()) {
    e.values = pauli_z_expectations(state);
  } else {
    Rng rng(mode.seed);
    e.values = sample_z_means(state, mode.shots, rng);
  }
  return e;
}

}  // namespace qkl

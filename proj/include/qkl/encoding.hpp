#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "qkl/random.hpp"
#include "qkl/statevec.hpp"

namespace qkl {

enum class RotationAxis { RY, RYRZ };
enum class Entangler { None, CzRing, CnotChain };

std::string to_string(RotationAxis axis);
std::string to_string(Entangler ent);
RotationAxis parse_rotation_axis(const std::string& s);
Entangler parse_entangler(const std::string& s);

// Structure of the angle-encoding circuit U(x).
struct EncodingSpec {
  int num_qubits = 8;
  int depth = 2;
  RotationAxis rotation_axis = RotationAxis::RY;
  Entangler entangler = Entangler::CzRing;
  double feature_scale = std::numbers::pi;
  bool data_reuploading = true;

  void validate() const;
  bool operator==(const EncodingSpec&) const = default;
};

// How measurement statistics are obtained. shots == 0 means exact.
struct SampleMode {
  std::uint64_t shots = 0;
  std::uint64_t seed = 0;
  bool sampled = false;

  static SampleMode exact() { return {}; }
  static SampleMode with_shots(std::uint64_t n, std::uint64_t seed) { return {n, seed, true}; }
  bool is_exact() const { return !sampled; }
  std::string describe() const;
};

struct Embedding {
  Eigen::VectorXd values;
  SampleMode source;
};

std::vector<Gate> encoding_circuit(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

StateVector encode(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x);

Embedding measure_embedding(const EncodingSpec& spec, const Eigen::Ref<const Eigen::VectorXd>& x,
                            const SampleMode& mode);

// Joint computational-basis sampling of all qubits; returns per-qubit means of
// the +1/-1 outcomes.
Eigen::VectorXd sample_z_means(const StateVector& state, std::uint64_t shots, Rng& rng);

// Shot estimate of the stacked per-qubit Bloch vectors: one joint
// measurement setting per Pauli axis, `shots` samples each.
Eigen::VectorXd sample_bloch_vectors(const StateVector& state, std::uint64_t shots, std::uint64_t seed);

}  // namespace qkl

// Part of qbusrep. MIT licensed; see LICENSE.
// Discrete-event simulation of the nested purification and swapping protocol:
// slot-clocked pair generation, recurrence purification with optimized local
// pre-rotations, Bell-measurement swapping, and rate studies.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "qbr/czgate.hpp"
#include "qbr/densmat.hpp"
#include "qbr/entangle.hpp"
#include "qbr/errors.hpp"

namespace qbr::repeater {

// Chain of N segments (N + 1 stations). Time advances in integer slots of the
// one-hop classical communication time.
struct NetworkConfig {
  int n_segments = 2;           // N, must be a power of two
  double spacing_km = 10.0;     // station distance
  double slot_time_s = 50e-6;   // one-hop classical confirmation time
  int qubits_per_station = 0;   // 0 selects the default 2 + 2 log2 N

  int levels() const;           // log2 N
  int default_qubits() const { return 2 + 2 * levels(); }
  double total_km() const { return n_segments * spacing_km; }
  void validate() const;        // ConfigError on non-power-of-two N etc.
};

// Elementary pairs are white-noised perfect pairs delivered with probability
// ps per slot; gates depolarize their two qubits by eps_gate.
struct WhiteNoise {
  double eps_init = 0.0;
  double eps_gate = 0.0;
  double ps = 1.0;  // per-slot generation success probability

  void validate() const;
};

// Elementary pairs and their success probability come from the dispersive
// link model; gates use the full distortion channel.
struct Physical {
  entangle::LinkParams link;
  czgate::GateChannel gate;
};

using NoiseModel = std::variant<WhiteNoise, Physical>;

// The two-qubit entangling gate used inside purification and swapping,
// wrapped so both noise variants fit one interface.
class TwoQubitGate {
 public:
  static TwoQubitGate ideal();
  static TwoQubitGate white(double eps_gate);
  static TwoQubitGate physical(czgate::GateChannel channel);

  // Controlled-X with this gate's noise, acting on the given qubits.
  DensityMatrix apply_cx(const DensityMatrix& rho, int control, int target) const;

 private:
  TwoQubitGate() = default;
  double eps_gate_ = 0.0;
  std::optional<czgate::GateChannel> channel_;
};

// One entangled pair in flight. rho holds two qubits; qubit 0 always belongs
// to the lower-numbered station.
struct PairRecord {
  int level = 0;                     // 0 = adjacent stations
  std::array<int, 2> endpoints{0, 1};  // station indices, ascending
  DensityMatrix rho = DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus));
  int purification_round = 0;
  std::int64_t ready_at = 0;         // slot at which the pair becomes usable
};

// Purification rounds demanded before a pair may be swapped, one entry per
// nesting level 0..log2 N.
struct ProtocolPolicy {
  std::vector<int> purification_rounds;

  void validate(const NetworkConfig& cfg) const;
};

struct SimResult {
  double mean_interval_s = 0.0;
  double std_interval_s = 0.0;
  double rate_hz = 0.0;
  double final_fidelity = 0.0;
  int pairs_delivered = 0;
};

// rho -> (1 - eps) rho + (eps/4) I, for a two-qubit state.
DensityMatrix white_noise(const DensityMatrix& rho, double eps);

// Generation probability and elementary pair state of a noise model, computed
// once so per-slot sampling stays cheap (the Physical pair state requires
// quadrature).
struct CompiledNoise {
  double ps = 1.0;
  DensityMatrix pair_state = DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus));
  TwoQubitGate gate = TwoQubitGate::ideal();

  static CompiledNoise compile(const NoiseModel& noise);
};

// Bernoulli(ps) generation attempt; on success returns a level-0 record
// carrying the model's elementary pair state (endpoints {0, 1}, ready_at 0;
// the scheduler fills in real bookkeeping).
std::optional<PairRecord> attempt_generation(const CompiledNoise& noise,
                                             std::mt19937_64& rng);
std::optional<PairRecord> attempt_generation(const NoiseModel& noise,
                                             std::mt19937_64& rng);

// Local pre-rotation choice for purification. Standard applies the fixed
// bilateral x-rotation of the recurrence protocol; Optimized searches the 24
// single-qubit Cliffords per pair (applied identically on both ends of that
// pair) for the highest exact post-selection fidelity.
enum class PreRotation { Standard, Optimized };

// Exact outcome distribution of one purification step: source pair a is kept,
// target pair b is measured. Branch states are conditioned on the two equal
// parity outcomes.
struct PurifyOutcome {
  double p_success = 0.0;  // p00 + p11
  double p00 = 0.0, p11 = 0.0;
  std::optional<DensityMatrix> rho00, rho11;  // absent when the branch has zero weight
  double kept_fidelity = 0.0;  // success-conditioned fidelity with the target pair
};

PurifyOutcome purify_map(const DensityMatrix& a, const DensityMatrix& b,
                         const TwoQubitGate& gate,
                         PreRotation mode = PreRotation::Optimized);

// Samples one purification attempt. Returns the kept, renormalized pair on
// matching parity and nullopt otherwise. Only the parity bit is exchanged
// classically, so the kept state is the mixture of the two success branches.
// ConfigError on level or endpoint mismatch.
std::optional<PairRecord> purify(const PairRecord& a, const PairRecord& b,
                                 const TwoQubitGate& gate, std::mt19937_64& rng,
                                 PreRotation mode = PreRotation::Optimized);

// Entanglement swapping at the single common station: noisy C-X, Hadamard
// basis measurement, Pauli correction on the surviving far qubit. Every
// outcome branch is aligned by its correction, so the returned state averages
// over the classically known outcomes and the operation is deterministic. The
// output joins the outer stations at level + 1. ConfigError unless the
// records share exactly one station and sit at the same level.
PairRecord swap(const PairRecord& a, const PairRecord& b,
                const TwoQubitGate& gate, std::mt19937_64& rng);

// Runs the event-driven protocol until n_deliver end-to-end pairs (at least 5)
// have been produced. Deterministic for fixed arguments.
SimResult run_simulation(const NetworkConfig& cfg, const ProtocolPolicy& policy,
                         const NoiseModel& noise, int n_deliver,
                         std::uint64_t seed);

// Smallest per-level purification effort whose deterministic state recursion
// reaches the target end-to-end fidelity; greedy over levels, ConfigError when
// the target is unreachable within max_rounds_per_level.
ProtocolPolicy policy_for_target(const NetworkConfig& cfg, const NoiseModel& noise,
                                 double target_fidelity,
                                 int max_rounds_per_level = 4);

// Log-log least-squares fit y = c x^exponent.
struct PowerLawFit {
  double exponent = 0.0;
  double intercept = 0.0;        // ln c
  double stderr_exponent = 0.0;  // standard error of the slope
};

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y);

struct RateStudyRow {
  double ps = 0.0;
  double rate_hz = 0.0;
  double final_fidelity = 0.0;
};

struct RateStudy {
  std::vector<RateStudyRow> rows;
  PowerLawFit fit;  // rate vs ps
};

// Sweeps the generation probability of a white-noise model over ps_grid
// (size >= 4), averaging trials_per_point independent runs per point, and fits
// the rate scaling exponent. Runs execute in parallel on n_workers threads
// (0 selects the hardware count); results are order-independent.
RateStudy rate_study(const NetworkConfig& cfg, const ProtocolPolicy& policy,
                     const WhiteNoise& base_noise, const std::vector<double>& ps_grid,
                     int n_deliver, int trials_per_point, std::uint64_t seed,
                     int n_workers = 0);

}  // namespace qbr::repeater

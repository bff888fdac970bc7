#pragma once
// Loss analysis of the measurement-free controlled-Z gate mediated by a
// coherent bus: bus trajectory, geometric phase, distortion superoperator,
// Kraus decomposition, and the derived noisy controlled-X channel.
// Part of qbusrep. MIT licensed; see LICENSE.

#include <array>
#include <complex>
#include <vector>

#include "qbr/densmat.hpp"
#include "qbr/errors.hpp"

namespace qbr::czgate {

// Parameters of the four-step bus sequence: initial amplitude alpha[0],
// displacement amplitudes alpha[1..3], interaction angles theta[1..4] (the
// sequence alternates qubit 1, qubit 2, qubit 1, qubit 2), and per-segment
// power transmissions.
//
// Loss bookkeeping: the displacements are assumed calibrated to the
// attenuated bus, so the noiseless amplitude recursion keeps its ideal form
// and the n-th segment's loss enters only through the weight
// (1 - T_n) T_{n-1} ... T_1. The bus is measured out after the fourth
// interaction, which acts as a final segment of zero transmission; the
// supplied transmission[3] therefore never enters the physics and is kept
// only so the four segments stay addressable uniformly.
struct CZParams {
  std::array<std::complex<double>, 4> alpha{};
  std::array<double, 4> theta{};
  std::array<double, 4> transmission{1.0, 1.0, 1.0, 1.0};
  bool semi_ideal = false;  // all alphas, thetas, transmissions equal

  // All four amplitudes/angles/transmissions equal.
  static CZParams semi_ideal_params(double alpha_mag, double theta,
                                    double transmission);
  // Semi-ideal with the amplitude chosen from gate_condition(transmission).
  static CZParams from_gate_condition(double theta, double transmission);

  void validate() const;
};

// 4x4 Hermitian matrix with unit diagonal; entry (a, b) multiplies the
// density-matrix element between computational-basis branches a and b
// (branch order |00>, |01>, |10>, |11>, z = +1 for |0>). Deterministic
// local rotations and the controlled-phase itself are already factored out.
struct DistortionMatrix {
  ComplexMatrix entries;
};

// phi_B(z1, z2) = c0 + c1 z1 + c2 z2 + c12 z1 z2 (exact 4-point fit).
struct BerryCoefficients {
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c12 = 0.0;
};

struct GateChannel {
  KrausSet kraus;                    // diagonal operators in the Z1/Z2 basis
  double lambda0 = 1.0;              // largest Kraus weight, in [1/4, 1]
  std::array<double, 4> lambdas{};   // all weights, sum to 1
  BerryCoefficients berry;
  DistortionMatrix distortion;

  static GateChannel noiseless();
};

// Exact bus-amplitude recursion through the four interactions for one
// computational branch (z1, z2 in {+1, -1}).
std::array<std::complex<double>, 4> beta_sequence(const CZParams& p, int z1,
                                                  int z2);

// Total state-dependent geometric phase accumulated by the displacements
// acting on the attenuated bus.
double berry_phase(const CZParams& p, int z1, int z2);

// Builds the distortion matrix: per-segment loss factors
// exp[-w_n (|beta_n(a) - beta_n(b)|^2 / 2 + i Im{beta_n(a)* beta_n(b)})]
// composed with the branch phase differences, after removing the best-fit
// local-rotation and controlled-phase generators. The generator split is a
// least-squares fit of the six independent pair phases onto
// lambda(z1, z2) = c1 z1 + c2 z2 + c12 z1 z2, computed on analytic
// (unwrapped) phase sums; the fit reproduces the symbolic semi-ideal
// separation exactly.
DistortionMatrix distortion_matrix(const CZParams& p);

// Eigendecomposition of D/4 into four diagonal Kraus operators. Eigenvalues
// in (-1e-9, 0) are clamped to zero; anything lower throws ConfigError.
// Does not fill the Berry coefficients (use make_gate_channel for that).
GateChannel kraus_decompose(const DistortionMatrix& d);

// Full pipeline: distortion, Kraus decomposition, and Berry-phase fit.
GateChannel make_gate_channel(const CZParams& p);

// |alpha theta|^2 needed for a pi controlled phase: pi / (T (1 + T)).
// Throws ConfigError below T = 0.05 where the requirement diverges.
double gate_condition(double transmission);

// The source's quoted approximation (1 + exp(-pi sqrt(t)/4))^2 / 4 for the
// largest Kraus weight. It does not approach 1 as t -> 1, so it is exposed
// for comparison output only and never asserted; in the regime of interest
// interpret t as the loss fraction rather than the transmission.
double lambda0_quoted_estimate(double t);

// Applies the noisy controlled-X: the distortion Kraus set conjugated into
// the X basis on the target, followed by the exact controlled-X (the pi/4
// local corrections are folded in, so a noiseless channel gives the
// textbook gate). rho may have 2 to 4 qubits.
DensityMatrix noisy_cx(const DensityMatrix& rho, const GateChannel& ch,
                       int control, int target);

struct ErrorCurveRow {
  double loss = 0.0;
  double theta = 0.0;
  double one_minus_lambda0 = 0.0;
};

// Gate-error curves: for each theta and each loss value, T = 1 - loss on
// every segment, amplitude from gate_condition, rows (loss, theta, 1-lambda0).
std::vector<ErrorCurveRow> cz_error_curve(const std::vector<double>& theta_list,
                                          const std::vector<double>& loss_grid);

}  // namespace qbr::czgate

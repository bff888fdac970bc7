#pragma once
// Bright-pulse entanglement distribution over lossy fiber with homodyne
// post-selection: closed-form success probability and fidelity, the exact
// numeric post-selected two-qubit state, and the displacement optimizer.
// Part of qbusrep. MIT licensed; see LICENSE.

#include <complex>
#include <string>
#include <vector>

#include "qbr/densmat.hpp"
#include "qbr/errors.hpp"

namespace qbr::entangle {

// Fiber attenuation length: transmission = exp(-ell / ell0).
inline constexpr double kDefaultAttenuationLengthKm = 25.0;

// Where the probe pulse is measured. With end detection the pulse crosses
// the full station spacing between the two interactions. In the mid-point
// arrangement pulses from both stations travel half the spacing and
// interfere at a station in the middle; the net effect on the formulas is
// that the transmission is evaluated at half the fiber length while the
// external dephasing (and the deterministic kick) is doubled, one
// contribution per arm.
enum class Geometry { kEndDetection, kMidPoint };

struct LinkParams {
  double alpha = 100.0;        // coherent amplitude, real and nonnegative
  double theta1 = 0.01;        // conditional phase at the first cavity (rad)
  double theta2 = 0.01;        // conditional phase at the second cavity (rad)
  double transmission = 1.0;   // power transmission between the interactions
  double pc = 0.5;             // post-selection half-window, homodyne units
  Geometry geometry = Geometry::kEndDetection;
  // The deterministic single-qubit rotations (the loss-induced kick and the
  // displacement-induced phase) can be undone locally; by default the model
  // treats them as corrected. Set false to keep them in the output state.
  bool apply_corrections = true;

  // Builds params with transmission derived from a fiber length. For the
  // mid-point geometry the relevant length is half the station spacing.
  static LinkParams from_fiber(double ell_km,
                               double ell0_km = kDefaultAttenuationLengthKm,
                               Geometry geometry = Geometry::kEndDetection);

  // Throws ConfigError on out-of-range fields.
  void validate() const;

  // Non-fatal advisories, e.g. interaction angles outside the small-angle
  // regime the model is built for (|theta| > 0.3).
  std::vector<std::string> warnings() const;
};

// Derived single-link quantities.
struct LinkDerived {
  double gamma1 = 0.0;          // external dephasing exponent, >= 0
  double xi1 = 0.0;             // deterministic kick angle (rad)
  std::complex<double> beta_t;  // tuning displacement
  double d = 0.0;               // distinguishability, >= 0
  double phi_t = 0.0;           // displacement-induced phase, coefficient
                                // of z1 (value for the z1 = +1 branch)
};

struct LossParams {
  double gamma1 = 0.0;
  double xi1 = 0.0;
};

// gamma1 = |alpha|^2 (1-T)(1-cos theta1), xi1 = |alpha|^2 (1-T) sin theta1;
// both doubled in the mid-point geometry.
LossParams external_loss_params(const LinkParams& p);

// Dephasing-plus-rotation channel on one qubit:
// {sqrt(lambda+) e^{iZ xi1/2}, sqrt(lambda-) Z e^{iZ xi1/2}},
// lambda_pm = (1 +- e^{-gamma1})/2.
KrausSet q1_channel(double gamma1, double xi1);

// beta_T = sqrt(T) alpha sin((theta1-theta2)/2) / sin(theta2/2).
// Throws SingularConfiguration when theta2 == 0.
std::complex<double> tuning_displacement(const LinkParams& p);

// d = 2 alpha sin(theta1/2) cos(theta2/2); for theta1 = theta2 = theta this
// is alpha sin theta.
double distinguishability(const LinkParams& p);

// All derived quantities at once.
LinkDerived derive_link(const LinkParams& p);

// Ps = [2 erf(sqrt2 pc) + erf(sqrt2(pc + sqrtT d)) + erf(sqrt2(pc - sqrtT d))]/4.
double success_probability(double d, double transmission, double pc);

// F = (1 + e^{-gamma1}) erf(sqrt2 pc) / (4 Ps). At pc == 0 the ratio is
// 0/0; the analytic limit (1 + e^{-gamma1}) / (2 (1 + e^{-2 T d^2})) is
// returned as documented behavior.
double entanglement_fidelity(double d, double transmission, double pc,
                             double gamma1);

struct PostSelectionResult {
  double ps = 0.0;          // success probability of the homodyne window
  double fidelity = 0.0;    // overlap of rho12 with the odd-parity Bell ket
  DensityMatrix rho12;      // post-selected, renormalized two-qubit state
};

// Exact numeric post-selected state: integrates the conditional state over
// the homodyne window with adaptive quadrature (relative tolerance rel_tol)
// and renormalizes. Throws SingularConfiguration for theta2 == 0 and
// SolverError if the quadrature cannot converge.
PostSelectionResult post_selected_state(const LinkParams& p,
                                        double rel_tol = 1e-8);

struct OptimalDisplacement {
  double d_star = 0.0;
  double fidelity = 0.0;
};

// Maximizes the closed-form fidelity over d in (0, 10] (absolute tolerance
// 1e-4) using the small-angle dephasing gamma1 = (1-T) d^2 / 2.
OptimalDisplacement optimize_d(double transmission, double pc);

struct CurveRow {
  double pc = 0.0;
  double d_star = 0.0;
  double ps = 0.0;
  double fidelity = 0.0;
};

// Fidelity/success-probability trade-off curve at fixed fiber length (in
// attenuation lengths, total station spacing), optimizing d at each pc.
std::vector<CurveRow> fidelity_ps_curve(double ell_over_ell0,
                                        const std::vector<double>& pc_grid,
                                        Geometry geometry = Geometry::kEndDetection);

// Upper bound on the distributed entanglement, 1 - exp(-4 alpha^2 sin^2(theta1/2)).
double entanglement_entropy_bound(double alpha, double theta1);

}  // namespace qbr::entangle

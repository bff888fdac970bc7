// Part of qbusrep. MIT licensed; see LICENSE.
// Dispersive emitter-cavity interface: cavity-filtered pulses, semiclassical
// Bloch dynamics of the probe interaction, perturbative cross-checks, material
// presets, and saturation sweeps.
#pragma once

#include <complex>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "qbr/errors.hpp"

namespace qbr::cqed {

using Complex = std::complex<double>;

// Emitter / cavity parameter set. All angular frequencies and rates are in
// rad/s, times in seconds, the mode volume in m^3 and the wavelength in nm.
//
// omega0 is the qubit-transition / cavity-resonance detuning; the probe pulse
// carrier is locked to the cavity resonance, so frequencies quoted relative to
// the emitter put the pulse at omega0 as well.
struct EmitterCavityParams {
  std::string name;        // preset label, empty for ad-hoc parameter sets
  double g = 0.0;          // vacuum Rabi coupling
  double kappa = 0.0;      // cavity output (external) coupling rate
  double gamma_cav = 0.0;  // total cavity energy decay rate, kappa <= gamma_cav
  double omega0 = 0.0;     // emitter-cavity detuning
  double tau_r = 0.0;      // radiative lifetime of the bare transition
  double tau_nr = std::numeric_limits<double>::infinity();  // non-radiative lifetime
  double delta = 0.0;      // qubit ground-state splitting (removed exactly by the
                           // interaction-frame transform; kept for bookkeeping)
  double q_factor = 0.0;   // cavity quality factor (informational)
  double lambda_nm = 0.0;  // transition wavelength
  double n_index = 1.0;    // refractive index at the transition
  double v_mode = 0.0;     // cavity mode volume

  // Throws ConfigError unless g, kappa, gamma_cav, tau_r > 0, tau_nr > 0
  // (infinity allowed) and kappa <= gamma_cav.
  void validate() const;

  // Transition angular frequency 2 pi c / lambda.
  double omega_atom() const;

  // Effective single-sided coupling g' = g sqrt(kappa/gamma_cav); the natural
  // rate unit of the probe interaction.
  double g_prime() const;

  // Bare total lifetime: 1/tau = 1/tau_r + 1/tau_nr.
  double tau_total() const;
};

// Probe pulse riding on the cavity resonance. The envelope is Gaussian with
// unit norm, sqrt-intensity amplitude alpha, and rms duration sigma_p.
struct PulseParams {
  double alpha = 1.0;    // coherent amplitude (mean photon number alpha^2)
  double sigma_p = 0.0;  // envelope rms width, seconds

  void validate() const;  // ConfigError unless sigma_p > 0 and alpha >= 0
};

// Vacuum coupling from the radiative lifetime and mode geometry:
// g^2 = (3 / (4 pi)^2) (omega_a / tau_r) (lambda^3 / (n^3 V)).
double coupling_g(double lambda_nm, double n_index, double v_mode_m3, double tau_r);

// Purcell spectral enhancement F(omega) = tau_r gamma g^2 / (omega^2 + gamma^2/4),
// with omega the offset from the cavity resonance.
double purcell_factor(double omega, const EmitterCavityParams& p);

// Single-atom cooperativity Phi = (tau/tau_r) (kappa/gamma) F(0).
double cooperativity(const EmitterCavityParams& p);

// Total excited-state decay rate Gamma of the cavity-dressed emitter:
// 2 Gamma = (1 + F(omega0)) / tau_r + 1 / tau_nr.
double total_decay(const EmitterCavityParams& p);

// Cavity-shifted detuning of the driven transition:
// Omega = omega0 [1 + F(omega0) / (gamma tau_r)].
double stark_detuning(const EmitterCavityParams& p);

// Intracavity field amplitude S(t) produced by the unit-norm Gaussian input
// envelope after the single-pole cavity filter. Dimensionless and invariant
// under a common rescaling of all rates; g S(t) is the instantaneous coupling
// rate seen by the emitter. The envelope is truncated at +-6 sigma_p around
// its centre t0 = 6 sigma_p; beyond the truncation S decays as the bare
// cavity ring-down.
class FilteredPulse {
 public:
  FilteredPulse(const PulseParams& pulse, const EmitterCavityParams& p);

  double operator()(double t) const;  // S(t), t >= 0
  double t0() const { return t0_; }         // envelope centre
  double t_truncate() const { return t0_ + 6.0 * sigma_; }
  double t_end() const { return t_end_; }   // integration horizon
  double peak() const { return peak_; }     // max_t S(t)
  // Pulse energy integral J_S = int S(t)^2 dt (Parseval-bounded by 4 kappa/gamma^2).
  double energy() const;

 private:
  double kappa_, gamma_, sigma_, t0_, t_end_, peak_, s_trunc_;

  double raw(double t) const;
};

// Time-resolved solution of the driven three-level dynamics with the bus mode
// eliminated. All entries are sampled on the (decimated) adaptive time grid;
// scalars derived from the end state live in InteractionResult.
struct BlochTrajectory {
  std::vector<double> t;                    // seconds
  std::vector<Complex> alpha_tilde;         // conditional bus amplitude
  std::vector<double> rho_ee;               // excited-state population
  std::vector<Complex> rho_e1;              // optical coherence (driven branch)
  std::vector<Complex> varrho_e0;           // cross coherence of the 0-branch block
  std::vector<Complex> varrho_10;           // qubit coherence functional
  std::vector<double> s_of_t;               // drive S(t)
  std::vector<double> damping;              // D(t) in [0, 1]

  double ee_integral = 0.0;   // int_0^inf rho_ee dt, analytic tail included
  double gamma_total = 0.0;   // Gamma used by the propagation
  double stark_omega = 0.0;   // Omega used by the propagation
  double alpha_in = 0.0;      // input amplitude
  double peak_s = 0.0;
  bool converged = false;     // |S(t_end)| below extraction threshold
  std::size_t steps = 0;      // accepted integrator steps

  EmitterCavityParams params;
  PulseParams pulse;
};

// Scalar summary of one conditional-interaction trajectory.
struct InteractionResult {
  double theta = 0.0;     // conditional phase, arg alpha_tilde(inf) (signed;
                          // negative for positive detuning in this frame)
  double loss = 0.0;      // photon-number loss exponent,
                          // -ln(|alpha_tilde(inf)|^2 / alpha^2)
  double d = 0.0;         // distinguishability |Im alpha_tilde(inf)|
  double fidelity = 0.0;  // F = (1 + D(inf)) / 2
};

// Integrates the coupled equations for (alpha_tilde, rho_ee, rho_e1) and the
// closed coherence pair (varrho_e0, varrho_10) from the vacuum-start initial
// conditions of an equal superposition qubit. Controlled dopri5, relative
// tolerance 1e-9, absolute 1e-12, run in g'-normalized units. Throws
// SolverError on step-size collapse or step-budget exhaustion.
BlochTrajectory solve_bloch(const EmitterCavityParams& p, const PulseParams& pulse);

// Reduces a converged trajectory to (theta, loss, d, fidelity). Throws
// SolverError if the trajectory did not converge.
InteractionResult interaction_result(const BlochTrajectory& traj);

// Second-order perturbative values for cross-checking the solver in the weak,
// far-detuned regime.
struct PerturbativeResult {
  double theta2 = 0.0;             // principal-value integral form
  double theta2_narrowband = 0.0;  // closed form (1/(omega_p tau_r))(kappa/gamma) F(omega_p - omega0)
  // Photon-number loss exponents, directly comparable with
  // InteractionResult::loss.
  double l2 = 0.0;  // resonant absorption of the pulse tail at the emitter line
  double l3 = 0.0;  // dispersive scattering, theta2 * 2 Gamma / Omega with the
                    // cavity-dressed decay rate and Stark-shifted detuning
  bool expansion_valid = true;     // false when |alpha theta2|^2 > 0.1
};

// Evaluates theta2 by quadrature of the pulse spectrum against the dispersive
// kernel, plus the narrowband closed form and the loss terms L2, L3. Requires
// omega0 sigma_p > 5 so the atomic pole lies outside the pulse bandwidth
// (ConfigError otherwise).
PerturbativeResult perturbative_oracle(const EmitterCavityParams& p, const PulseParams& pulse);

// Closed-form saturation model for sweep seeding and feasibility triage.
struct SaturationEstimate {
  double d_m = 0.0;      // maximum attainable displacement Phi Gamma / sqrt(8 g^2 |S|^2)
  double y = 0.0;        // Omega / Gamma
  double x = 0.0;        // alpha Phi / (2 d_m)
  double d_est = 0.0;    // alpha Phi y / (1 + y^2 + x^2)
  double damping_estimate = 0.0;  // exp[-(d_est^2/Phi)(1 + d_est^2 / (2 d_m^2))]
  bool infeasible = false;        // target_d > d_m
  double alpha_seed = 0.0;        // linear-theory alpha reaching target_d
};

// target_d <= 0 disables the feasibility flag and seed.
SaturationEstimate saturation_estimate(const EmitterCavityParams& p,
                                       const PulseParams& pulse, double target_d);

// Built-in material parameter sets. Names: "si" (donor-bound exciton,
// high-Q microcavity), "znse" (fluorine donor, fast radiative lifetime),
// "ion" (trapped ion, large mode volume). The detuning omega0 stored in a
// preset is a representative default; sweeps override it.
std::vector<EmitterCavityParams> material_presets();

// Case-insensitive lookup into material_presets(); ConfigError when unknown.
EmitterCavityParams preset_by_name(const std::string& name);

// One operating point of a saturation sweep. saturation_param = alpha g'/omega0.
struct SweepRow {
  double saturation_param = 0.0;
  double alpha = 0.0;
  double omega0 = 0.0;
  double sigma_p = 0.0;
  double d = 0.0;
  double fidelity = 0.0;
  double theta = 0.0;
  double loss = 0.0;
};

// Sweeps the saturation parameter x = alpha g'/omega0 along curves of constant
// alpha * omega0 (one product per entry, in rad/s) for each pulse width lambda
// given in sigma_p_list, solving the full dynamics at every grid point:
// alpha = sqrt(C x / g'), omega0 = C / alpha. Points run in parallel on
// n_workers threads (0 selects the hardware count); row order is
// deterministic (products outer, sigma_p middle, grid inner).
std::vector<SweepRow> saturation_sweep(const EmitterCavityParams& base,
                                       const std::vector<double>& alpha_omega0_products,
                                       const std::vector<double>& sigma_p_list,
                                       const std::vector<double>& saturation_grid = {},
                                       int n_workers = 0);

}  // namespace qbr::cqed

// Part of qbusrep. MIT licensed; see LICENSE.
#include "qbr/cqed.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include <boost/numeric/odeint.hpp>

#include "qbr/math.hpp"

namespace qbr::cqed {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSpeedOfLight = 299792458.0;  // m/s

// Fraction of the peak below which the drive counts as switched off; the
// integration horizon is stretched until the ring-down reaches it.
constexpr double kResidualDrive = 5e-7;

double inverse_or_zero(double tau) {
  return std::isfinite(tau) ? 1.0 / tau : 0.0;
}

std::string param_echo(const EmitterCavityParams& p, const PulseParams& pulse) {
  std::ostringstream os;
  os << " [g=" << p.g << ", kappa=" << p.kappa << ", gamma=" << p.gamma_cav
     << ", omega0=" << p.omega0 << ", alpha=" << pulse.alpha
     << ", sigma_p=" << pulse.sigma_p << "]";
  return os.str();
}

// D(t) from the which-path exponent and the coherence functional, evaluated in
// log space so balanced large exponents cannot overflow.
double damping_of(const Complex& alpha_tilde, const Complex& varrho_10,
                  double alpha_in) {
  const double mag = std::abs(varrho_10);
  if (mag <= 0.0) return 0.0;
  const double ln_d = 0.5 * std::norm(Complex(alpha_in, 0.0) - alpha_tilde) +
                      std::log(2.0 * mag);
  return ln_d >= 0.0 ? 1.0 : std::exp(ln_d);
}

}  // namespace

void EmitterCavityParams::validate() const {
  if (!(g > 0.0) || !std::isfinite(g)) {
    throw ConfigError("emitter-cavity coupling g must be positive");
  }
  if (!(kappa > 0.0) || !(gamma_cav > 0.0)) {
    throw ConfigError("cavity rates kappa and gamma_cav must be positive");
  }
  if (kappa > gamma_cav) {
    throw ConfigError("external coupling kappa cannot exceed the total cavity rate");
  }
  if (!(tau_r > 0.0)) throw ConfigError("radiative lifetime tau_r must be positive");
  if (!(tau_nr > 0.0)) throw ConfigError("non-radiative lifetime tau_nr must be positive");
  if (!std::isfinite(omega0)) throw ConfigError("detuning omega0 must be finite");
}

double EmitterCavityParams::omega_atom() const {
  if (!(lambda_nm > 0.0)) {
    throw ConfigError("transition wavelength is not set for this parameter set");
  }
  return 2.0 * kPi * kSpeedOfLight / (lambda_nm * 1e-9);
}

double EmitterCavityParams::g_prime() const {
  return g * std::sqrt(kappa / gamma_cav);
}

double EmitterCavityParams::tau_total() const {
  return 1.0 / (1.0 / tau_r + inverse_or_zero(tau_nr));
}

void PulseParams::validate() const {
  if (!(sigma_p > 0.0) || !std::isfinite(sigma_p)) {
    throw ConfigError("pulse width sigma_p must be positive");
  }
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("pulse amplitude alpha must be non-negative");
  }
}

double coupling_g(double lambda_nm, double n_index, double v_mode_m3, double tau_r) {
  if (!(lambda_nm > 0.0) || !(n_index > 0.0) || !(v_mode_m3 > 0.0) || !(tau_r > 0.0)) {
    throw ConfigError("coupling_g requires positive wavelength, index, volume and lifetime");
  }
  const double lambda = lambda_nm * 1e-9;
  const double omega_a = 2.0 * kPi * kSpeedOfLight / lambda;
  const double g2 = (3.0 / math::sq(4.0 * kPi)) * (omega_a / tau_r) *
                    (lambda * lambda * lambda / (n_index * n_index * n_index * v_mode_m3));
  return std::sqrt(g2);
}

double purcell_factor(double omega, const EmitterCavityParams& p) {
  return p.tau_r * p.gamma_cav * p.g * p.g /
         (omega * omega + 0.25 * p.gamma_cav * p.gamma_cav);
}

double cooperativity(const EmitterCavityParams& p) {
  return (p.tau_total() / p.tau_r) * (p.kappa / p.gamma_cav) *
         purcell_factor(0.0, p);
}

double total_decay(const EmitterCavityParams& p) {
  return 0.5 * ((1.0 + purcell_factor(p.omega0, p)) / p.tau_r +
                inverse_or_zero(p.tau_nr));
}

double stark_detuning(const EmitterCavityParams& p) {
  return p.omega0 * (1.0 + purcell_factor(p.omega0, p) / (p.gamma_cav * p.tau_r));
}

FilteredPulse::FilteredPulse(const PulseParams& pulse, const EmitterCavityParams& p)
    : kappa_(p.kappa), gamma_(p.gamma_cav), sigma_(pulse.sigma_p) {
  pulse.validate();
  if (!(kappa_ > 0.0) || !(gamma_ > 0.0)) {
    throw ConfigError("filtered pulse requires positive cavity rates");
  }
  t0_ = 6.0 * sigma_;

  // Scan for the peak: the filtered envelope is unimodal, with the maximum
  // between the envelope centre and the truncation point.
  const double xm = math::golden_section_minimize(
      [this](double t) { return -raw(t); }, t0_ - 3.0 * sigma_, t_truncate(),
      1e-6 * sigma_);
  peak_ = std::max({raw(xm), raw(t0_), raw(t_truncate())});
  s_trunc_ = raw(t_truncate());

  // Extend the horizon until the ring-down is negligible relative to the peak
  // (at least eight cavity lifetimes past the truncated envelope).
  const double ratio = std::max(s_trunc_ / peak_, 1e-300);
  const double needed =
      ratio > kResidualDrive
          ? (2.0 / gamma_) * std::log(ratio / kResidualDrive) + 2.0 / gamma_
          : 0.0;
  t_end_ = t_truncate() + std::max(8.0 / gamma_, needed);
}

double FilteredPulse::raw(double t) const {
  const double pref = std::sqrt(kappa_) *
                      std::pow(2.0 * kPi * sigma_ * sigma_, -0.25) * sigma_ *
                      std::sqrt(kPi);
  const double d = t - t0_;
  const double w = 0.5 * gamma_ * sigma_ - 0.5 * d / sigma_;
  const double env = std::exp(-0.25 * d * d / (sigma_ * sigma_));
  if (w >= 0.0) return pref * env * math::erfcx(w);
  // Late-time branch: split off the exactly cancelling exponentials so every
  // factor stays bounded.
  const double decay =
      std::exp(0.25 * gamma_ * gamma_ * sigma_ * sigma_ - 0.5 * gamma_ * d);
  return pref * (2.0 * decay - env * math::erfcx(-w));
}

double FilteredPulse::operator()(double t) const {
  const double tc = t_truncate();
  if (t <= tc) return raw(t);
  return s_trunc_ * std::exp(-0.5 * gamma_ * (t - tc));
}

double FilteredPulse::energy() const {
  const double body = math::adaptive_gauss_legendre(
      [this](double t) { return raw(t) * raw(t); }, 0.0, t_truncate(), 1e-11);
  return body + s_trunc_ * s_trunc_ / gamma_;
}

BlochTrajectory solve_bloch(const EmitterCavityParams& p, const PulseParams& pulse) {
  namespace ode = boost::numeric::odeint;
  using State = std::array<Complex, 6>;
  // State layout: alpha_tilde, rho_ee, rho_e1, varrho_e0, varrho_10,
  // int rho_ee dt.

  p.validate();
  pulse.validate();

  // Work in units of the effective rate g' so every regime sees numbers of
  // comparable magnitude; S(t) itself is invariant under the rescaling.
  const double unit = p.g_prime();
  EmitterCavityParams pn = p;
  pn.g /= unit;
  pn.kappa /= unit;
  pn.gamma_cav /= unit;
  pn.omega0 /= unit;
  pn.delta /= unit;
  pn.tau_r *= unit;
  if (std::isfinite(pn.tau_nr)) pn.tau_nr *= unit;
  PulseParams pun = pulse;
  pun.sigma_p *= unit;

  const FilteredPulse drive(pun, pn);
  const double gn = pn.g;
  const double big_gamma = total_decay(pn);
  const double big_omega = stark_detuning(pn);
  const double alpha0 = pulse.alpha;
  const Complex decay_rot(-big_gamma, big_omega);  // i Omega - Gamma

  auto rhs = [&](const State& y, State& dy, double x) {
    const double s = drive(x);
    const Complex a = y[0];
    const double ee = y[1].real();
    const Complex re1 = y[2];
    const Complex ve0 = y[3];
    const Complex v10 = y[4];
    dy[0] = Complex(0.0, -2.0 * gn * s) * re1;
    dy[1] = Complex(-2.0 * gn * s * std::imag(std::conj(a) * re1) -
                        2.0 * big_gamma * ee,
                    0.0);
    dy[2] = Complex(0.0, gn * s) * a * (2.0 * ee - 0.5) + decay_rot * re1;
    dy[3] = Complex(0.0, -gn * s) * a * v10 + decay_rot * ve0;
    dy[4] = Complex(0.0, -gn * s * alpha0) * ve0;
    dy[5] = Complex(ee, 0.0);
  };

  State y{Complex(alpha0, 0.0), Complex(0.0), Complex(0.0), Complex(0.0),
          Complex(0.5, 0.0), Complex(0.0)};

  BlochTrajectory traj;
  traj.params = p;
  traj.pulse = pulse;
  traj.gamma_total = total_decay(p);
  traj.stark_omega = stark_detuning(p);
  traj.alpha_in = alpha0;
  traj.peak_s = drive.peak();

  const double x_end = drive.t_end();
  const double record_dx = x_end / 4096.0;
  double last_recorded = -x_end;
  auto record = [&](double x, const State& s) {
    for (const Complex& v : s) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        throw SolverError("propagation diverged at t=" + std::to_string(x / unit) +
                          param_echo(p, pulse));
      }
    }
    traj.t.push_back(x / unit);
    traj.alpha_tilde.push_back(s[0]);
    traj.rho_ee.push_back(s[1].real());
    traj.rho_e1.push_back(s[2]);
    traj.varrho_e0.push_back(s[3]);
    traj.varrho_10.push_back(s[4]);
    traj.s_of_t.push_back(drive(x));
    traj.damping.push_back(damping_of(s[0], s[4], alpha0));
    last_recorded = x;
  };

  auto controlled =
      ode::make_controlled(1e-12, 1e-9, ode::runge_kutta_dopri5<State>());

  const double fastest =
      std::max({std::abs(big_omega), big_gamma, pn.gamma_cav,
                gn * drive.peak() * std::max(1.0, alpha0), 1e-3});
  double x = 0.0;
  double dt = std::min(pun.sigma_p / 20.0, 0.35 / fastest);
  constexpr std::size_t kMaxSteps = 200'000'000;

  record(x, y);
  while (x < x_end * (1.0 - 1e-14)) {
    dt = std::min(dt, x_end - x);
    if (controlled.try_step(rhs, y, x, dt) == ode::fail) {
      if (dt < 1e-16 * x_end) {
        throw SolverError("step size collapsed at t=" + std::to_string(x / unit) +
                          param_echo(p, pulse));
      }
      continue;
    }
    if (++traj.steps > kMaxSteps) {
      throw SolverError("step budget exhausted" + param_echo(p, pulse));
    }
    if (x - last_recorded >= record_dx) record(x, y);
  }
  if (last_recorded < x) record(x, y);

  // Analytic tail of the excited-state integral past the horizon, then back to
  // laboratory units.
  const double ee_tail = y[1].real() / (2.0 * big_gamma);
  traj.ee_integral = (y[5].real() + ee_tail) / unit;
  traj.converged = drive(x_end) < 1e-6 * drive.peak();
  return traj;
}

InteractionResult interaction_result(const BlochTrajectory& traj) {
  if (!traj.converged || traj.t.empty()) {
    throw SolverError("trajectory did not converge; no asymptotic values");
  }
  const Complex a_end = traj.alpha_tilde.back();
  InteractionResult r;
  r.fidelity = 0.5 * (1.0 + traj.damping.back());
  if (traj.alpha_in <= 0.0) return r;
  r.theta = std::arg(a_end);
  const double ratio = std::norm(a_end) / math::sq(traj.alpha_in);
  r.loss = std::max(0.0, -std::log(ratio));
  r.d = std::abs(a_end.imag());
  return r;
}

PerturbativeResult perturbative_oracle(const EmitterCavityParams& p,
                                       const PulseParams& pulse) {
  p.validate();
  pulse.validate();
  const double sig = pulse.sigma_p;
  const double w0 = p.omega0;
  if (!(std::abs(w0) * sig > 5.0)) {
    throw ConfigError(
        "perturbative oracle requires |omega0| sigma_p > 5 so the emitter pole "
        "sits outside the pulse bandwidth");
  }
  const double gam = p.gamma_cav;
  const double g2k = p.g * p.g * p.kappa;
  const double spectral_norm = std::sqrt(8.0 * kPi) * sig;

  // Principal-value integral over the pulse spectrum; the integration window
  // covers the Gaussian support and excludes the pole by the precondition.
  const double half_width = 4.0 / sig;
  const double kernel = math::adaptive_gauss_legendre(
      [&](double u) {
        return std::exp(-2.0 * sig * sig * u * u) /
               ((w0 + u) * (u * u + 0.25 * gam * gam));
      },
      -half_width, half_width, 1e-11);

  PerturbativeResult out;
  out.theta2 = g2k * spectral_norm / (2.0 * kPi) * kernel;
  out.theta2_narrowband =
      (1.0 / (w0 * p.tau_r)) * (p.kappa / gam) * purcell_factor(0.0, p);
  // Number-loss convention: twice the amplitude losses of the expansion. The
  // transverse rate entering third order is the cavity-dressed one, so the
  // Purcell-enhanced decay at the operating detuning matters here.
  out.l2 = g2k * spectral_norm * std::exp(-2.0 * sig * sig * w0 * w0) /
           (w0 * w0 + 0.25 * gam * gam);
  out.l3 = out.theta2 * 2.0 * total_decay(p) / stark_detuning(p);
  out.expansion_valid = math::sq(pulse.alpha * out.theta2) <= 0.1;
  return out;
}

SaturationEstimate saturation_estimate(const EmitterCavityParams& p,
                                       const PulseParams& pulse, double target_d) {
  p.validate();
  pulse.validate();
  const double phi = cooperativity(p);
  const double big_gamma = total_decay(p);
  const double big_omega = stark_detuning(p);
  const FilteredPulse drive(pulse, p);
  const double pulse_j = p.g * p.g * drive.energy();  // int g^2 S^2 dt
  // Time-averaged drive strength over the effective Gaussian duration.
  const double g2s_bar = pulse_j / (2.0 * std::sqrt(kPi) * pulse.sigma_p);

  SaturationEstimate est;
  est.d_m = phi * big_gamma / std::sqrt(8.0 * g2s_bar);
  est.y = big_omega / big_gamma;
  est.x = pulse.alpha * phi / (2.0 * est.d_m);
  est.d_est = pulse.alpha * phi * est.y /
              (1.0 + est.y * est.y + est.x * est.x);
  est.damping_estimate =
      std::exp(-(math::sq(est.d_est) / phi) *
               (1.0 + math::sq(est.d_est) / (2.0 * math::sq(est.d_m))));
  if (target_d > 0.0) {
    est.infeasible = target_d > est.d_m;
    if (pulse_j > 0.0 && big_omega != 0.0) {
      est.alpha_seed = target_d *
                       (math::sq(big_gamma) + math::sq(big_omega)) /
                       (pulse_j * std::abs(big_omega));
    }
  }
  return est;
}

std::vector<EmitterCavityParams> material_presets() {
  std::vector<EmitterCavityParams> out;

  {
    // Donor-bound exciton in silicon: slow radiative lifetime dominated by a
    // fast non-radiative channel, recovered by a high-Q small-mode cavity.
    EmitterCavityParams si;
    si.name = "si";
    si.lambda_nm = 1078.0;
    si.n_index = 3.45;
    const double lam = si.lambda_nm * 1e-9;
    si.v_mode = std::pow(lam / si.n_index, 3);
    si.q_factor = 1e6;
    si.tau_r = 2e-3;
    si.tau_nr = 300e-9;
    si.gamma_cav = si.omega_atom() / si.q_factor;
    si.kappa = 0.95 * si.gamma_cav;
    si.g = coupling_g(si.lambda_nm, si.n_index, si.v_mode, si.tau_r);
    si.omega0 = 2.0 * kPi * 5e9;
    out.push_back(si);
  }
  {
    // Fluorine donor in ZnSe: fast radiative transition, modest-Q cavity.
    EmitterCavityParams znse;
    znse.name = "znse";
    znse.lambda_nm = 440.0;
    znse.n_index = 2.5;
    const double lam = znse.lambda_nm * 1e-9;
    znse.v_mode = std::pow(lam / znse.n_index, 3);
    znse.q_factor = 1e3;
    znse.tau_r = 500e-12;
    znse.tau_nr = std::numeric_limits<double>::infinity();
    znse.gamma_cav = znse.omega_atom() / znse.q_factor;
    znse.kappa = 0.95 * znse.gamma_cav;
    znse.g = coupling_g(znse.lambda_nm, znse.n_index, znse.v_mode, znse.tau_r);
    znse.omega0 = 1.5e14;
    out.push_back(znse);
  }
  {
    // Trapped ion in a macroscopic high-finesse cavity: huge mode volume,
    // no non-radiative decay.
    EmitterCavityParams ion;
    ion.name = "ion";
    ion.lambda_nm = 866.0;
    ion.n_index = 1.0;
    const double lam = ion.lambda_nm * 1e-9;
    ion.v_mode = 1.275e7 * lam * lam * lam;
    ion.q_factor = 3e8;
    ion.tau_r = 6.9e-9;
    ion.tau_nr = std::numeric_limits<double>::infinity();
    ion.gamma_cav = ion.omega_atom() / ion.q_factor;
    ion.kappa = 0.95 * ion.gamma_cav;
    ion.g = coupling_g(ion.lambda_nm, ion.n_index, ion.v_mode, ion.tau_r);
    ion.omega0 = 1e9;
    out.push_back(ion);
  }
  return out;
}

EmitterCavityParams preset_by_name(const std::string& name) {
  std::string key = name;
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (const EmitterCavityParams& p : material_presets()) {
    if (p.name == key) return p;
  }
  throw ConfigError("unknown material preset '" + name +
                    "' (known: si, znse, ion)");
}

std::vector<SweepRow> saturation_sweep(const EmitterCavityParams& base,
                                       const std::vector<double>& alpha_omega0_products,
                                       const std::vector<double>& sigma_p_list,
                                       const std::vector<double>& saturation_grid,
                                       int n_workers) {
  base.validate();
  std::vector<double> grid = saturation_grid;
  if (grid.empty()) {
    for (int i = 0; i < 25; ++i) grid.push_back(0.01 * std::pow(10.0, 3.0 * i / 24.0));
  }

  struct Job {
    double product, sigma_p, x;
  };
  std::vector<Job> jobs;
  for (double product : alpha_omega0_products) {
    if (!(product > 0.0)) throw ConfigError("alpha*omega0 products must be positive");
    for (double sigma_p : sigma_p_list) {
      for (double x : grid) jobs.push_back({product, sigma_p, x});
    }
  }

  const double gp = base.g_prime();
  std::vector<SweepRow> rows(jobs.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex fail_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        SweepRow row;
        row.saturation_param = job.x;
        row.alpha = std::sqrt(job.product * job.x / gp);
        row.omega0 = job.product / row.alpha;
        row.sigma_p = job.sigma_p;
        EmitterCavityParams p = base;
        p.omega0 = row.omega0;
        const PulseParams pulse{row.alpha, job.sigma_p};
        const InteractionResult r = interaction_result(solve_bloch(p, pulse));
        row.d = r.d;
        row.fidelity = r.fidelity;
        row.theta = r.theta;
        row.loss = r.loss;
        rows[i] = row;
      } catch (...) {
        std::lock_guard<std::mutex> lock(fail_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  unsigned n_threads = n_workers > 0
                           ? static_cast<unsigned>(n_workers)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<std::size_t>(n_threads, jobs.size());
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace qbr::cqed

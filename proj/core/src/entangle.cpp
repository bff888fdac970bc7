// Entanglement-distribution model implementation. Part of qbusrep. MIT licensed.

#include "qbr/entangle.hpp"

#include <array>
#include <cmath>

#include "qbr/math.hpp"

namespace qbr::entangle {

using std::complex;

LinkParams LinkParams::from_fiber(double ell_km, double ell0_km,
                                  Geometry geometry) {
  if (ell_km < 0.0 || ell0_km <= 0.0) {
    throw ConfigError("fiber lengths must be nonnegative (attenuation length positive)");
  }
  LinkParams p;
  const double effective_km =
      geometry == Geometry::kMidPoint ? 0.5 * ell_km : ell_km;
  p.transmission = std::exp(-effective_km / ell0_km);
  p.geometry = geometry;
  return p;
}

void LinkParams::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ConfigError("alpha must be a finite nonnegative amplitude");
  }
  if (!(transmission > 0.0) || transmission > 1.0) {
    throw ConfigError("transmission must lie in (0, 1]");
  }
  if (!(pc >= 0.0)) throw ConfigError("post-selection window pc must be >= 0");
  if (!std::isfinite(theta1) || !std::isfinite(theta2)) {
    throw ConfigError("interaction angles must be finite");
  }
}

std::vector<std::string> LinkParams::warnings() const {
  std::vector<std::string> out;
  if (std::abs(theta1) > 0.3 || std::abs(theta2) > 0.3) {
    out.push_back("interaction angle exceeds 0.3 rad; the weak-phase model "
                  "is unreliable this far from the small-angle regime");
  }
  return out;
}

LossParams external_loss_params(const LinkParams& p) {
  p.validate();
  const double lost = 1.0 - p.transmission;
  const double scale = p.geometry == Geometry::kMidPoint ? 2.0 : 1.0;
  LossParams out;
  out.gamma1 = scale * p.alpha * p.alpha * lost * (1.0 - std::cos(p.theta1));
  out.xi1 = scale * p.alpha * p.alpha * lost * std::sin(p.theta1);
  return out;
}

KrausSet q1_channel(double gamma1, double xi1) {
  if (!(gamma1 >= 0.0)) throw ConfigError("gamma1 must be >= 0");
  const double lp = 0.5 * (1.0 + std::exp(-gamma1));
  const double lm = 0.5 * (1.0 - std::exp(-gamma1));
  ComplexMatrix rot = ComplexMatrix::Zero(2, 2);
  rot(0, 0) = std::polar(1.0, 0.5 * xi1);
  rot(1, 1) = std::polar(1.0, -0.5 * xi1);
  KrausSet k;
  k.operators.push_back(std::sqrt(lp) * rot);
  k.operators.push_back(std::sqrt(lm) * (pauli_z() * rot));
  return k;
}

std::complex<double> tuning_displacement(const LinkParams& p) {
  p.validate();
  if (p.theta2 == 0.0) {
    throw SingularConfiguration(
        "theta2 = 0 makes the tuning displacement divergent");
  }
  const double value = std::sqrt(p.transmission) * p.alpha *
                       std::sin(0.5 * (p.theta1 - p.theta2)) /
                       std::sin(0.5 * p.theta2);
  return complex<double>(value, 0.0);
}

double distinguishability(const LinkParams& p) {
  p.validate();
  return std::abs(2.0 * p.alpha * std::sin(0.5 * p.theta1) *
                  std::cos(0.5 * p.theta2));
}

LinkDerived derive_link(const LinkParams& p) {
  LinkDerived out;
  const LossParams loss = external_loss_params(p);
  out.gamma1 = loss.gamma1;
  out.xi1 = loss.xi1;
  out.beta_t = tuning_displacement(p);
  out.d = distinguishability(p);
  // Phase imprinted on qubit 1 by the tuning displacement,
  // Im{ sqrt(T) alpha e^{-i z1 theta1/2} beta_T } = -z1 T alpha^2
  // sin((theta1-theta2)/2) sin(theta1/2) / sin(theta2/2); stored for z1 = +1.
  out.phi_t = -p.transmission * p.alpha * p.alpha *
              std::sin(0.5 * (p.theta1 - p.theta2)) * std::sin(0.5 * p.theta1) /
              std::sin(0.5 * p.theta2);
  return out;
}

double success_probability(double d, double transmission, double pc) {
  if (!(pc >= 0.0)) throw ConfigError("pc must be >= 0");
  if (!(transmission > 0.0) || transmission > 1.0) {
    throw ConfigError("transmission must lie in (0, 1]");
  }
  const double s = std::sqrt(2.0);
  const double a = std::sqrt(transmission) * d;
  return 0.25 * (2.0 * std::erf(s * pc) + std::erf(s * (pc + a)) +
                 std::erf(s * (pc - a)));
}

double entanglement_fidelity(double d, double transmission, double pc,
                             double gamma1) {
  if (!(pc >= 0.0)) throw ConfigError("pc must be >= 0");
  if (!(gamma1 >= 0.0)) throw ConfigError("gamma1 must be >= 0");
  if (pc == 0.0) {
    // 0/0 at a vanishing window; return the analytic limit.
    const double bell = 1.0 + std::exp(-gamma1);
    return bell / (2.0 * (1.0 + std::exp(-2.0 * transmission * d * d)));
  }
  const double ps = success_probability(d, transmission, pc);
  return (1.0 + std::exp(-gamma1)) * std::erf(std::sqrt(2.0) * pc) /
         (4.0 * ps);
}

namespace {

// Branch bookkeeping for the numeric post-selected state. Basis order
// |00>, |01>, |10>, |11> with qubit 1 as the high bit; z = +1 for |0>.
struct BranchData {
  std::array<double, 4> z1{};
  std::array<double, 4> r{};       // real quadrature of the outgoing pulse
  std::array<double, 4> i{};       // imaginary quadrature (homodyne mean)
  std::array<double, 4> extra{};   // uncorrected single-qubit phase per branch
  double gamma1 = 0.0;
};

BranchData make_branches(const LinkParams& p) {
  BranchData b;
  const LinkDerived derived = derive_link(p);
  b.gamma1 = derived.gamma1;
  const double sqrt_t = std::sqrt(p.transmission);
  const double s1 = std::sin(0.5 * p.theta1);
  const double s2 = std::sin(0.5 * p.theta2);
  const double c2 = std::cos(0.5 * p.theta2);
  const double cot2 = c2 / s2;
  for (int idx = 0; idx < 4; ++idx) {
    const double z1 = idx < 2 ? 1.0 : -1.0;
    const double z2 = (idx % 2 == 0) ? 1.0 : -1.0;
    b.z1[idx] = z1;
    b.i[idx] = sqrt_t * p.alpha * s1 * c2 * (z1 + z2);
    b.r[idx] = sqrt_t * p.alpha * s1 * s2 * (cot2 * cot2 - z1 * z2);
    // Deterministic phases on qubit 1: the loss kick xi1 and the
    // displacement phase phi_T. Both are locally corrected by default.
    b.extra[idx] =
        p.apply_corrections ? 0.0 : z1 * (0.5 * derived.xi1 + derived.phi_t);
  }
  return b;
}

}  // namespace

PostSelectionResult post_selected_state(const LinkParams& p, double rel_tol) {
  p.validate();
  if (p.theta2 == 0.0) {
    throw SingularConfiguration("theta2 = 0: post-selected state undefined");
  }
  if (!(p.pc > 0.0)) {
    throw ConfigError("post_selected_state needs a positive window pc");
  }
  const BranchData b = make_branches(p);
  const double norm = std::sqrt(2.0 / M_PI);  // |G(p)|^2 normalization
  const double decay = std::exp(-b.gamma1);

  auto integrand = [&](double pval) {
    std::array<double, 4> g;
    for (int k = 0; k < 4; ++k) {
      g[k] = std::exp(-math::sq(pval + b.i[k]));
    }
    ComplexMatrix m(4, 4);
    for (int row = 0; row < 4; ++row) {
      for (int col = 0; col < 4; ++col) {
        double weight = 0.25 * norm * g[row] * g[col];
        if (b.z1[row] != b.z1[col]) weight *= decay;
        const double phase = -((2.0 * pval + b.i[row]) * b.r[row] -
                               (2.0 * pval + b.i[col]) * b.r[col]) +
                             (b.extra[row] - b.extra[col]);
        m(row, col) = std::polar(weight, phase);
      }
    }
    return m;
  };

  // The entries oscillate in p at frequencies up to 2 max|R|; pre-split the
  // window so the adaptive rule never sees more than a fraction of a cycle
  // per panel at the top level.
  double max_r = 0.0;
  for (double r : b.r) max_r = std::max(max_r, std::abs(r));
  const double window = 2.0 * p.pc;
  int chunks = 1 + static_cast<int>(window * 2.0 * max_r / (0.5 * M_PI));
  if (chunks > 200000) {
    throw SolverError("post_selected_state: integrand oscillates too fast "
                      "for the supported parameter range");
  }

  ComplexMatrix acc = ComplexMatrix::Zero(4, 4);
  const double step = window / chunks;
  for (int c = 0; c < chunks; ++c) {
    const double lo = -p.pc + c * step;
    const double hi = (c + 1 == chunks) ? p.pc : lo + step;
    acc += math::adaptive_gauss_legendre(integrand, lo, hi,
                                         rel_tol / std::max(1, chunks / 4));
  }

  const double ps = acc.trace().real();
  if (!(ps > 0.0)) {
    throw SolverError("post-selection probability vanished; window too small");
  }
  acc /= ps;
  DensityMatrix rho(2, std::move(acc), DensityMatrix::Unchecked{});
  rho.resymmetrize();
  // Validating pass: confirms the quadrature produced a physical state.
  DensityMatrix checked(2, rho.matrix());

  PostSelectionResult out{ps, 0.0, std::move(checked)};
  out.fidelity = fidelity_with_pure(out.rho12, bell_ket(BellKind::PsiPlus));
  return out;
}

namespace {

double closed_form_objective(double d, double transmission, double pc,
                             double gamma_scale) {
  const double gamma1 = gamma_scale * (1.0 - transmission) * d * d / 2.0;
  return entanglement_fidelity(d, transmission, pc, gamma1);
}

OptimalDisplacement optimize_impl(double transmission, double pc,
                                  double gamma_scale) {
  constexpr double kDUpper = 10.0;
  constexpr int kGrid = 400;
  double best_d = kDUpper / kGrid;
  double best_f = -1.0;
  for (int i = 1; i <= kGrid; ++i) {
    const double d = kDUpper * i / kGrid;
    const double f = closed_form_objective(d, transmission, pc, gamma_scale);
    if (f > best_f) {
      best_f = f;
      best_d = d;
    }
  }
  const double lo = std::max(1e-6, best_d - kDUpper / kGrid);
  const double hi = std::min(kDUpper, best_d + kDUpper / kGrid);
  const double d_star = math::golden_section_minimize(
      [&](double d) { return -closed_form_objective(d, transmission, pc, gamma_scale); },
      lo, hi, 1e-4);
  return OptimalDisplacement{
      d_star, closed_form_objective(d_star, transmission, pc, gamma_scale)};
}

}  // namespace

OptimalDisplacement optimize_d(double transmission, double pc) {
  if (!(transmission > 0.0) || transmission > 1.0) {
    throw ConfigError("transmission must lie in (0, 1]");
  }
  if (!(pc > 0.0)) throw ConfigError("optimize_d needs pc > 0");
  return optimize_impl(transmission, pc, 1.0);
}

std::vector<CurveRow> fidelity_ps_curve(double ell_over_ell0,
                                        const std::vector<double>& pc_grid,
                                        Geometry geometry) {
  if (pc_grid.empty()) throw ConfigError("pc grid must be nonempty");
  if (!(ell_over_ell0 >= 0.0)) throw ConfigError("fiber length must be >= 0");
  const bool midpoint = geometry == Geometry::kMidPoint;
  const double arm = midpoint ? 0.5 * ell_over_ell0 : ell_over_ell0;
  const double transmission = std::exp(-arm);
  const double gamma_scale = midpoint ? 2.0 : 1.0;
  std::vector<CurveRow> rows;
  rows.reserve(pc_grid.size());
  for (double pc : pc_grid) {
    const OptimalDisplacement opt = optimize_impl(transmission, pc, gamma_scale);
    CurveRow row;
    row.pc = pc;
    row.d_star = opt.d_star;
    row.ps = success_probability(opt.d_star, transmission, pc);
    row.fidelity = opt.fidelity;
    rows.push_back(row);
  }
  return rows;
}

double entanglement_entropy_bound(double alpha, double theta1) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  const double s = std::sin(0.5 * theta1);
  return 1.0 - std::exp(-4.0 * alpha * alpha * s * s);
}

}  // namespace qbr::entangle

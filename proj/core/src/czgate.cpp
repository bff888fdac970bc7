// Controlled-Z loss machinery implementation. Part of qbusrep. MIT licensed.

#include "qbr/czgate.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "qbr/math.hpp"

namespace qbr::czgate {

using std::complex;

namespace {

constexpr complex<double> kI{0.0, 1.0};

// Branch index <-> z values; branch order |00>, |01>, |10>, |11>.
int z1_of(int branch) { return branch < 2 ? 1 : -1; }
int z2_of(int branch) { return branch % 2 == 0 ? 1 : -1; }

void check_z(int z) {
  if (z != 1 && z != -1) throw ConfigError("z eigenvalues must be +1 or -1");
}

}  // namespace

CZParams CZParams::semi_ideal_params(double alpha_mag, double theta,
                                     double transmission) {
  CZParams p;
  p.alpha.fill(complex<double>(alpha_mag, 0.0));
  p.theta.fill(theta);
  p.transmission.fill(transmission);
  p.semi_ideal = true;
  p.validate();
  return p;
}

CZParams CZParams::from_gate_condition(double theta, double transmission) {
  if (theta == 0.0) throw ConfigError("gate condition undefined at theta = 0");
  const double alpha_theta_sq = gate_condition(transmission);
  return semi_ideal_params(std::sqrt(alpha_theta_sq) / std::abs(theta), theta,
                           transmission);
}

void CZParams::validate() const {
  for (double t : transmission) {
    if (!(t > 0.0) || t > 1.0) {
      throw ConfigError("segment transmissions must lie in (0, 1]");
    }
  }
  for (double th : theta) {
    if (!std::isfinite(th)) throw ConfigError("angles must be finite");
  }
  for (const complex<double>& a : alpha) {
    if (!std::isfinite(a.real()) || !std::isfinite(a.imag())) {
      throw ConfigError("amplitudes must be finite");
    }
  }
}

std::array<complex<double>, 4> beta_sequence(const CZParams& p, int z1,
                                             int z2) {
  p.validate();
  check_z(z1);
  check_z(z2);
  auto rot = [](double angle) { return std::polar(1.0, 0.5 * angle); };
  std::array<complex<double>, 4> beta;
  beta[0] = p.alpha[0] * rot(z1 * p.theta[0]);
  beta[1] = rot(z2 * p.theta[1]) * (beta[0] + (kI - 1.0) * p.alpha[1]);
  beta[2] = rot(z1 * p.theta[2]) * (beta[1] - (kI + 1.0) * p.alpha[2]);
  beta[3] = rot(z2 * p.theta[3]) * (beta[2] - (kI - 1.0) * p.alpha[3]);
  return beta;
}

double berry_phase(const CZParams& p, int z1, int z2) {
  const auto beta = beta_sequence(p, z1, z2);
  const double t1 = p.transmission[0];
  const double t12 = t1 * p.transmission[1];
  const double t123 = t12 * p.transmission[2];
  const complex<double> sum = (kI - 1.0) * t1 * std::conj(beta[0]) * p.alpha[1] -
                              (kI + 1.0) * t12 * std::conj(beta[1]) * p.alpha[2] -
                              (kI - 1.0) * t123 * std::conj(beta[2]) * p.alpha[3];
  return sum.imag();
}

namespace {

// Loss weight of segment n (0-based): photons lost there have sampled the
// bus amplitudes beta_n of the branches. The final segment is the bus
// measurement itself, so its weight uses zero transmission regardless of
// the configured value.
std::array<double, 4> loss_weights(const CZParams& p) {
  std::array<double, 4> w{};
  double upstream = 1.0;
  for (int n = 0; n < 4; ++n) {
    const double t = n == 3 ? 0.0 : p.transmission[n];
    w[n] = (1.0 - t) * upstream;
    upstream *= t;
  }
  return w;
}

struct RawElements {
  // For each ordered pair (a, b): magnitude exponent (>= 0) and analytic
  // phase, both as real sums so no 2-pi wrapping can occur.
  Eigen::Matrix4d damp;
  Eigen::Matrix4d phase;
};

RawElements raw_elements(const CZParams& p) {
  std::array<std::array<complex<double>, 4>, 4> beta;
  std::array<double, 4> phi_b;
  for (int a = 0; a < 4; ++a) {
    beta[a] = beta_sequence(p, z1_of(a), z2_of(a));
    phi_b[a] = berry_phase(p, z1_of(a), z2_of(a));
  }
  const std::array<double, 4> w = loss_weights(p);
  RawElements out;
  out.damp.setZero();
  out.phase.setZero();
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      double damp = 0.0;
      double measured = 0.0;
      for (int n = 0; n < 4; ++n) {
        damp += 0.5 * w[n] * std::norm(beta[a][n] - beta[b][n]);
        measured += w[n] * (std::conj(beta[a][n]) * beta[b][n]).imag();
      }
      out.damp(a, b) = damp;
      out.phase(a, b) = phi_b[a] - phi_b[b] - measured;
    }
  }
  return out;
}

// Least-squares split of the pair phases into a local + controlled-phase
// generator lambda(z1,z2) = c1 z1 + c2 z2 + c12 z1 z2 over the six
// independent pairs; returns lambda per branch.
std::array<double, 4> generator_fit(const Eigen::Matrix4d& phase) {
  constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  Eigen::Matrix<double, 6, 3> design;
  Eigen::Matrix<double, 6, 1> rhs;
  for (int row = 0; row < 6; ++row) {
    const int a = kPairs[row][0], b = kPairs[row][1];
    design(row, 0) = z1_of(a) - z1_of(b);
    design(row, 1) = z2_of(a) - z2_of(b);
    design(row, 2) = z1_of(a) * z2_of(a) - z1_of(b) * z2_of(b);
    rhs(row) = phase(a, b);
  }
  const Eigen::Vector3d c =
      design.colPivHouseholderQr().solve(rhs);
  std::array<double, 4> lambda;
  for (int a = 0; a < 4; ++a) {
    lambda[a] = c(0) * z1_of(a) + c(1) * z2_of(a) + c(2) * z1_of(a) * z2_of(a);
  }
  return lambda;
}

}  // namespace

DistortionMatrix distortion_matrix(const CZParams& p) {
  const RawElements raw = raw_elements(p);
  const std::array<double, 4> lambda = generator_fit(raw.phase);
  DistortionMatrix d;
  d.entries = ComplexMatrix::Zero(4, 4);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const double residual = raw.phase(a, b) - (lambda[a] - lambda[b]);
      d.entries(a, b) = std::polar(std::exp(-raw.damp(a, b)), residual);
    }
  }
  return d;
}

GateChannel kraus_decompose(const DistortionMatrix& d) {
  if (d.entries.rows() != 4 || d.entries.cols() != 4) {
    throw ConfigError("distortion matrix must be 4x4");
  }
  const double herm =
      (d.entries - d.entries.adjoint()).cwiseAbs().maxCoeff();
  if (herm > 1e-9) {
    throw ConfigError("distortion matrix is not Hermitian");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.25 * d.entries);
  Eigen::Vector4d vals = es.eigenvalues();
  ComplexMatrix vecs = es.eigenvectors();
  GateChannel ch;
  // Ascending from the solver; we store descending so lambdas[0] = lambda0.
  for (int m = 0; m < 4; ++m) {
    double lam = vals(3 - m);
    if (lam < -1e-9) {
      throw ConfigError("distortion matrix has eigenvalue " +
                        std::to_string(lam) + " below the -1e-9 clamp");
    }
    lam = std::max(lam, 0.0);
    ch.lambdas[m] = lam;
    ComplexVector v = vecs.col(3 - m);
    // Fix the eigenvector phase for reproducibility: largest-magnitude
    // entry made real and positive.
    int imax = 0;
    for (int i = 1; i < 4; ++i) {
      if (std::abs(v(i)) > std::abs(v(imax))) imax = i;
    }
    if (std::abs(v(imax)) > 0.0) v *= std::abs(v(imax)) / v(imax);
    ComplexMatrix op = ComplexMatrix::Zero(4, 4);
    for (int a = 0; a < 4; ++a) {
      op(a, a) = 2.0 * std::sqrt(lam) * v(a);
    }
    ch.kraus.operators.push_back(std::move(op));
  }
  ch.lambda0 = ch.lambdas[0];
  ch.distortion = d;
  return ch;
}

GateChannel make_gate_channel(const CZParams& p) {
  GateChannel ch = kraus_decompose(distortion_matrix(p));
  // Exact 4-point fit of the geometric phase onto {1, z1, z2, z1 z2}.
  double c0 = 0, c1 = 0, c2 = 0, c12 = 0;
  for (int a = 0; a < 4; ++a) {
    const double phi = berry_phase(p, z1_of(a), z2_of(a));
    c0 += 0.25 * phi;
    c1 += 0.25 * phi * z1_of(a);
    c2 += 0.25 * phi * z2_of(a);
    c12 += 0.25 * phi * z1_of(a) * z2_of(a);
  }
  ch.berry = BerryCoefficients{c0, c1, c2, c12};
  return ch;
}

GateChannel GateChannel::noiseless() {
  DistortionMatrix d;
  d.entries = ComplexMatrix::Ones(4, 4);
  return kraus_decompose(d);
}

double gate_condition(double transmission) {
  if (!(transmission > 0.0) || transmission > 1.0) {
    throw ConfigError("transmission must lie in (0, 1]");
  }
  if (transmission < 0.05) {
    throw ConfigError("gate condition diverges below 5% transmission");
  }
  return M_PI / (transmission * (1.0 + transmission));
}

double lambda0_quoted_estimate(double t) {
  const double e = std::exp(-M_PI * std::sqrt(t) / 4.0);
  return 0.25 * (1.0 + e) * (1.0 + e);
}

DensityMatrix noisy_cx(const DensityMatrix& rho, const GateChannel& ch,
                       int control, int target) {
  if (rho.n_qubits() < 2) {
    throw ConfigError("noisy_cx needs at least two qubits");
  }
  if (control == target) throw ConfigError("control and target must differ");
  // I (x) H on (control, target): converts the Z-diagonal distortion
  // operators to act through X on the target.
  ComplexMatrix h2 = ComplexMatrix::Zero(4, 4);
  h2.block(0, 0, 2, 2) = hadamard();
  h2.block(2, 2, 2, 2) = hadamard();
  const ComplexMatrix u_cx = cnot();
  KrausSet embedded;
  for (const ComplexMatrix& dm : ch.kraus.operators) {
    const ComplexMatrix k = u_cx * (h2 * dm * h2);
    embedded.operators.push_back(
        embed_operator(k, {control, target}, rho.n_qubits()));
  }
  return apply_kraus(rho, embedded);
}

std::vector<ErrorCurveRow> cz_error_curve(const std::vector<double>& theta_list,
                                          const std::vector<double>& loss_grid) {
  if (theta_list.empty() || loss_grid.empty()) {
    throw ConfigError("error-curve grids must be nonempty");
  }
  std::vector<ErrorCurveRow> rows;
  rows.reserve(theta_list.size() * loss_grid.size());
  for (double theta : theta_list) {
    for (double loss : loss_grid) {
      if (loss < 0.0 || loss >= 1.0) {
        throw ConfigError("loss values must lie in [0, 1)");
      }
      const CZParams p = CZParams::from_gate_condition(theta, 1.0 - loss);
      const GateChannel ch = make_gate_channel(p);
      rows.push_back(ErrorCurveRow{loss, theta, 1.0 - ch.lambda0});
    }
  }
  return rows;
}

}  // namespace qbr::czgate

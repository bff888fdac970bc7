// Density-operator algebra implementation. Part of qbusrep. MIT licensed.

#include "qbr/densmat.hpp"

#include <cmath>
#include <string>

namespace qbr {

namespace {

constexpr int kMaxQubits = 4;

void check_qubit_count(int n_qubits) {
  if (n_qubits < 0 || n_qubits > kMaxQubits) {
    throw ConfigError("qubit count " + std::to_string(n_qubits) +
                      " outside supported range [0, 4]");
  }
}

}  // namespace

DensityMatrix::DensityMatrix(int n_qubits, ComplexMatrix matrix)
    : n_qubits_(n_qubits), matrix_(std::move(matrix)) {
  check_qubit_count(n_qubits);
  const Eigen::Index d = Eigen::Index(1) << n_qubits;
  if (matrix_.rows() != d || matrix_.cols() != d) {
    throw ConfigError("density matrix dimension does not match qubit count");
  }
  const double herm = (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
  if (herm > kHermTol) {
    throw ConfigError("density matrix not Hermitian (deviation " +
                      std::to_string(herm) + ")");
  }
  const double tr_err = std::abs(matrix_.trace() - Complex(1.0, 0.0));
  if (tr_err > kTraceTol) {
    throw ConfigError("density matrix trace differs from 1 by " +
                      std::to_string(tr_err));
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(matrix_,
                                                  Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -kEigTol) {
    throw ConfigError("density matrix has negative eigenvalue " +
                      std::to_string(min_eig));
  }
}

DensityMatrix DensityMatrix::pure(int n_qubits, const ComplexVector& ket) {
  check_qubit_count(n_qubits);
  const Eigen::Index d = Eigen::Index(1) << n_qubits;
  if (ket.size() != d) throw ConfigError("ket dimension mismatch");
  const double norm = ket.norm();
  if (std::abs(norm - 1.0) > 1e-9) {
    throw ConfigError("ket is not normalized (norm " + std::to_string(norm) +
                      ")");
  }
  ComplexMatrix m = ket * ket.adjoint();
  // Rank-1 projector from a unit ket is physical by construction.
  return DensityMatrix(n_qubits, std::move(m), Unchecked{});
}

DensityMatrix DensityMatrix::maximally_mixed(int n_qubits) {
  check_qubit_count(n_qubits);
  const Eigen::Index d = Eigen::Index(1) << n_qubits;
  ComplexMatrix m = ComplexMatrix::Identity(d, d) / double(d);
  return DensityMatrix(n_qubits, std::move(m), Unchecked{});
}

void DensityMatrix::resymmetrize() {
  matrix_ = 0.5 * (matrix_ + matrix_.adjoint()).eval();
  const double tr = matrix_.trace().real();
  if (tr <= 0.0) throw ConfigError("state trace collapsed to zero");
  matrix_ /= tr;
}

bool KrausSet::is_complete(double tol) const {
  if (operators.empty()) return false;
  const Eigen::Index d = operators.front().rows();
  ComplexMatrix acc = ComplexMatrix::Zero(d, d);
  for (const ComplexMatrix& op : operators) {
    if (op.rows() != d || op.cols() != d) return false;
    acc += op.adjoint() * op;
  }
  return (acc - ComplexMatrix::Identity(d, d)).cwiseAbs().maxCoeff() <= tol;
}

void KrausSet::validate() const {
  if (operators.empty()) throw ConfigError("empty Kraus set");
  const Eigen::Index d = operators.front().rows();
  for (const ComplexMatrix& op : operators) {
    if (op.rows() != d || op.cols() != d) {
      throw ConfigError("Kraus operators have mismatched dimensions");
    }
  }
  if (!is_complete()) {
    throw ConfigError("Kraus set violates completeness (sum D^dag D != I)");
  }
}

DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b) {
  const int n = a.n_qubits() + b.n_qubits();
  if (n > kMaxQubits) {
    throw ConfigError("tensor product would need " + std::to_string(n) +
                      " qubits; the register caps at 4");
  }
  const Eigen::Index da = a.dim(), db = b.dim();
  ComplexMatrix out(da * db, da * db);
  for (Eigen::Index i = 0; i < da; ++i) {
    for (Eigen::Index j = 0; j < da; ++j) {
      out.block(i * db, j * db, db, db) = a.matrix()(i, j) * b.matrix();
    }
  }
  return DensityMatrix(n, std::move(out), DensityMatrix::Unchecked{});
}

DensityMatrix apply_kraus(const DensityMatrix& rho, const KrausSet& k) {
  k.validate();
  if (k.operators.front().rows() != rho.dim()) {
    throw ConfigError("Kraus operator dimension does not match the state");
  }
  ComplexMatrix out = ComplexMatrix::Zero(rho.dim(), rho.dim());
  for (const ComplexMatrix& op : k.operators) {
    out += op * rho.matrix() * op.adjoint();
  }
  const double tr = out.trace().real();
  if (std::abs(tr - 1.0) > kKrausTol) {
    throw ConfigError("channel moved the trace by " + std::to_string(tr - 1.0));
  }
  DensityMatrix result(rho.n_qubits(), std::move(out),
                       DensityMatrix::Unchecked{});
  result.resymmetrize();
  return result;
}

ComplexMatrix embed_operator(const ComplexMatrix& u,
                             const std::vector<int>& qubits, int n_qubits) {
  const Eigen::Index dim = Eigen::Index(1) << n_qubits;
  const int k = static_cast<int>(qubits.size());
  if (u.rows() != (Eigen::Index(1) << k) || u.cols() != u.rows()) {
    throw ConfigError("operator dimension does not match qubit list");
  }
  std::vector<bool> listed(n_qubits, false);
  for (int q : qubits) {
    if (q < 0 || q >= n_qubits) throw ConfigError("qubit index out of range");
    if (listed[q]) throw ConfigError("repeated qubit index");
    listed[q] = true;
  }
  auto sub_index = [&](Eigen::Index full) {
    Eigen::Index s = 0;
    for (int pos = 0; pos < k; ++pos) {
      const int bit = n_qubits - 1 - qubits[pos];  // qubit 0 = MSB
      s = (s << 1) | ((full >> bit) & 1);
    }
    return s;
  };
  ComplexMatrix full = ComplexMatrix::Zero(dim, dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      // Unlisted bits must agree between row and column.
      bool match = true;
      for (int q = 0; q < n_qubits && match; ++q) {
        if (listed[q]) continue;
        const int bit = n_qubits - 1 - q;
        match = ((i >> bit) & 1) == ((j >> bit) & 1);
      }
      if (match) full(i, j) = u(sub_index(i), sub_index(j));
    }
  }
  return full;
}

DensityMatrix apply_unitary(const DensityMatrix& rho, const ComplexMatrix& u,
                            const std::vector<int>& qubits) {
  const ComplexMatrix full = embed_operator(u, qubits, rho.n_qubits());
  ComplexMatrix out = full * rho.matrix() * full.adjoint();
  DensityMatrix result(rho.n_qubits(), std::move(out),
                       DensityMatrix::Unchecked{});
  result.resymmetrize();
  return result;
}

MeasureResult projective_measure(const DensityMatrix& rho,
                                 const std::vector<int>& qubit_indices,
                                 const std::vector<int>& outcome_pattern) {
  const int n = rho.n_qubits();
  if (qubit_indices.size() != outcome_pattern.size()) {
    throw ConfigError("outcome pattern length does not match qubit list");
  }
  std::vector<int> measured_bit(n, -1);
  for (std::size_t i = 0; i < qubit_indices.size(); ++i) {
    const int q = qubit_indices[i];
    if (q < 0 || q >= n) throw ConfigError("qubit index out of range");
    if (measured_bit[q] != -1) throw ConfigError("repeated qubit index");
    const int o = outcome_pattern[i];
    if (o != 0 && o != 1) throw ConfigError("outcomes must be 0 or 1");
    measured_bit[q] = o;
  }

  const int n_rest = n - static_cast<int>(qubit_indices.size());
  const Eigen::Index dim_rest = Eigen::Index(1) << n_rest;

  // Maps an index over the remaining qubits to the full-register index with
  // the measured qubits pinned to their outcomes.
  auto full_index = [&](Eigen::Index rest) {
    Eigen::Index full = 0;
    Eigen::Index rest_bits_left = n_rest;
    for (int q = 0; q < n; ++q) {
      int bit;
      if (measured_bit[q] >= 0) {
        bit = measured_bit[q];
      } else {
        --rest_bits_left;
        bit = static_cast<int>((rest >> rest_bits_left) & 1);
      }
      full = (full << 1) | bit;
    }
    return full;
  };

  ComplexMatrix sub(dim_rest, dim_rest);
  for (Eigen::Index r = 0; r < dim_rest; ++r) {
    for (Eigen::Index c = 0; c < dim_rest; ++c) {
      sub(r, c) = rho.matrix()(full_index(r), full_index(c));
    }
  }
  const double prob = sub.trace().real();
  if (prob <= kEigTol) {
    return MeasureResult{0.0, std::nullopt};
  }
  sub /= prob;
  DensityMatrix post(n_rest, std::move(sub), DensityMatrix::Unchecked{});
  post.resymmetrize();
  return MeasureResult{prob, std::move(post)};
}

double fidelity_with_pure(const DensityMatrix& rho, const ComplexVector& ket) {
  if (ket.size() != rho.dim()) throw ConfigError("ket dimension mismatch");
  const double norm = ket.norm();
  if (std::abs(norm - 1.0) > 1e-9) {
    throw ConfigError("fidelity requires a normalized ket (norm " +
                      std::to_string(norm) + ")");
  }
  const double value = (ket.adjoint() * rho.matrix() * ket)(0, 0).real();
  return std::clamp(value, 0.0, 1.0);
}

ComplexMatrix pauli_i() { return ComplexMatrix::Identity(2, 2); }

ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0, 1, 1, 0;
  return m;
}

ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << Complex(0, 0), Complex(0, -1), Complex(0, 1), Complex(0, 0);
  return m;
}

ComplexMatrix pauli_z() {
  ComplexMatrix m(2, 2);
  m << 1, 0, 0, -1;
  return m;
}

ComplexMatrix hadamard() {
  ComplexMatrix m(2, 2);
  const double s = 1.0 / std::sqrt(2.0);
  m << s, s, s, -s;
  return m;
}

ComplexMatrix cnot() {
  ComplexMatrix m = ComplexMatrix::Zero(4, 4);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 3) = 1;
  m(3, 2) = 1;
  return m;
}

ComplexVector bell_ket(BellKind kind) {
  ComplexVector v = ComplexVector::Zero(4);
  const double s = 1.0 / std::sqrt(2.0);
  switch (kind) {
    case BellKind::PhiPlus:
      v(0) = s;
      v(3) = s;
      break;
    case BellKind::PhiMinus:
      v(0) = s;
      v(3) = -s;
      break;
    case BellKind::PsiPlus:
      v(1) = s;
      v(2) = s;
      break;
    case BellKind::PsiMinus:
      v(1) = s;
      v(2) = -s;
      break;
  }
  return v;
}

DensityMatrix werner_state(double f, BellKind kind) {
  if (f < 0.0 || f > 1.0) throw ConfigError("Werner fidelity outside [0, 1]");
  const ComplexVector ket = bell_ket(kind);
  const ComplexMatrix proj = ket * ket.adjoint();
  ComplexMatrix m =
      f * proj + (1.0 - f) / 3.0 * (ComplexMatrix::Identity(4, 4) - proj);
  return DensityMatrix(2, std::move(m), DensityMatrix::Unchecked{});
}

}  // namespace qbr

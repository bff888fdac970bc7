#pragma once
// Dense density-operator algebra for small multi-qubit registers (dimension
// at most 16), with Kraus channels, projective measurement, and fidelity.
// Part of qbusrep. MIT licensed; see LICENSE.
//
// Qubit index convention, shared by every module in this library: qubit 0 is
// the leftmost tensor factor and therefore the most significant bit of the
// computational-basis index. tensor_product(a, b) puts the qubits of `a`
// before (more significant than) the qubits of `b`.

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qbr/errors.hpp"

namespace qbr {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

// Validation tolerances for physical states.
inline constexpr double kHermTol = 1e-12;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kEigTol = 1e-10;
inline constexpr double kKrausTol = 1e-9;

// A density operator on n_qubits qubits. The intended carriers are one, two,
// and four qubit registers; zero- and three-qubit states are also permitted
// so that measurement remainders stay closed under the API.
class DensityMatrix {
 public:
  // Validates Hermiticity (1e-12), unit trace (1e-10), and positivity
  // (eigenvalues >= -1e-10); throws ConfigError on violation.
  DensityMatrix(int n_qubits, ComplexMatrix matrix);

  static DensityMatrix pure(int n_qubits, const ComplexVector& ket);
  static DensityMatrix maximally_mixed(int n_qubits);

  int n_qubits() const { return n_qubits_; }
  Eigen::Index dim() const { return matrix_.rows(); }
  const ComplexMatrix& matrix() const { return matrix_; }

  // Restores exact Hermiticity and unit trace; called after every channel
  // application so numeric drift cannot accumulate over long chains.
  void resymmetrize();

  // Constructs without validation; for internal hot paths that produce
  // states already known to be physical.
  struct Unchecked {};
  DensityMatrix(int n_qubits, ComplexMatrix matrix, Unchecked)
      : n_qubits_(n_qubits), matrix_(std::move(matrix)) {}

 private:
  int n_qubits_;
  ComplexMatrix matrix_;
};

// A channel as a list of Kraus operators D_m of common dimension satisfying
// the completeness relation sum_m D_m^dag D_m = I to within 1e-9.
struct KrausSet {
  std::vector<ComplexMatrix> operators;

  bool is_complete(double tol = kKrausTol) const;
  // Throws ConfigError when empty, ragged, or incomplete.
  void validate() const;
};

// Kronecker product of states; qubits of `a` become the high bits.
// Throws ConfigError when the result would exceed four qubits.
DensityMatrix tensor_product(const DensityMatrix& a, const DensityMatrix& b);

// sum_m D_m rho D_m^dag, then resymmetrize. Validates completeness and that
// the trace moved by less than 1e-9 before renormalization.
DensityMatrix apply_kraus(const DensityMatrix& rho, const KrausSet& k);

// Conjugates rho by a unitary acting on the listed qubits (the first listed
// qubit is the most significant bit of u's index). u must be 2^k x 2^k for k
// listed qubits.
DensityMatrix apply_unitary(const DensityMatrix& rho, const ComplexMatrix& u,
                            const std::vector<int>& qubits);

// Expands an operator on the listed qubits (first listed qubit = most
// significant bit of op's index) to the full 2^n_qubits register, acting as
// the identity elsewhere.
ComplexMatrix embed_operator(const ComplexMatrix& op,
                             const std::vector<int>& qubits, int n_qubits);

struct MeasureResult {
  double probability = 0.0;
  // Post-measurement state on the *remaining* qubits (in their original
  // relative order), renormalized. Empty when the outcome has probability 0.
  std::optional<DensityMatrix> post_state;
};

// Measures the listed qubits in the computational (Z) basis and asks for the
// given outcome pattern (0 or 1 per listed qubit). Returns the Born
// probability and the renormalized remainder state.
MeasureResult projective_measure(const DensityMatrix& rho,
                                 const std::vector<int>& qubit_indices,
                                 const std::vector<int>& outcome_pattern);

// <ket|rho|ket>, clamped into [0,1] (tolerance 1e-12). Throws ConfigError if
// the ket is not normalized to within 1e-9. Invariant under a global phase
// of the ket.
double fidelity_with_pure(const DensityMatrix& rho, const ComplexVector& ket);

// ---- small constructors shared across modules ----

ComplexMatrix pauli_i();
ComplexMatrix pauli_x();
ComplexMatrix pauli_y();
ComplexMatrix pauli_z();
ComplexMatrix hadamard();
ComplexMatrix cnot();  // two-qubit, first (high) bit controls the second

enum class BellKind { PhiPlus, PhiMinus, PsiPlus, PsiMinus };

// The four Bell kets on two qubits, e.g. PsiPlus = (|01> + |10>)/sqrt(2).
ComplexVector bell_ket(BellKind kind);

// Werner state with fidelity f to the chosen Bell ket: f P + (1-f)(I-P)/3.
DensityMatrix werner_state(double f, BellKind kind = BellKind::PsiPlus);

}  // namespace qbr

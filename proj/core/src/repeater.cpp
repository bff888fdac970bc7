// Part of qbusrep. MIT licensed; see LICENSE.
#include "qbr/repeater.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "qbr/math.hpp"

namespace qbr::repeater {

namespace {

// Portable uniform in [0, 1): 53 random mantissa bits, independent of the
// standard library's distribution implementation.
double canonical_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

ComplexMatrix kron2(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

// Quantized byte image of a state, used as a memoization key. 1e-13 absolute
// resolution keeps states that recur through identical deterministic algebra
// on one key without conflating physically distinct ones.
std::string state_key(const DensityMatrix& m) {
  const ComplexMatrix& mat = m.matrix();
  std::string out;
  out.reserve(static_cast<std::size_t>(mat.size()) * 16);
  auto put = [&out](double v) {
    const long long q = llround(v * 1e13);
    char buf[sizeof(long long)];
    std::memcpy(buf, &q, sizeof(q));
    out.append(buf, sizeof(q));
  };
  for (Eigen::Index i = 0; i < mat.rows(); ++i) {
    for (Eigen::Index j = 0; j < mat.cols(); ++j) {
      put(mat(i, j).real());
      put(mat(i, j).imag());
    }
  }
  return out;
}

// The 24 single-qubit Cliffords, enumerated once by closing {H, S} under
// multiplication with a phase-canonical representative per class.
const std::vector<ComplexMatrix>& single_qubit_cliffords() {
  static const std::vector<ComplexMatrix> table = [] {
    auto canonicalize = [](ComplexMatrix m) {
      Eigen::Index bi = 0, bj = 0;
      double best = -1.0;
      for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
          if (std::abs(m(i, j)) > best + 1e-9) {
            best = std::abs(m(i, j));
            bi = i;
            bj = j;
          }
        }
      }
      m *= std::conj(m(bi, bj)) / std::abs(m(bi, bj));
      return m;
    };
    auto key_of = [](const ComplexMatrix& m) {
      std::ostringstream os;
      for (Eigen::Index i = 0; i < 2; ++i) {
        for (Eigen::Index j = 0; j < 2; ++j) {
          os << llround(m(i, j).real() * 1e6) << ','
             << llround(m(i, j).imag() * 1e6) << ';';
        }
      }
      return os.str();
    };

    ComplexMatrix s(2, 2);
    s << 1, 0, 0, Complex(0, 1);
    const std::array<ComplexMatrix, 2> gens{hadamard(), s};

    std::vector<ComplexMatrix> found;
    std::map<std::string, bool> seen;
    std::vector<ComplexMatrix> queue{canonicalize(pauli_i())};
    seen[key_of(queue.front())] = true;
    while (!queue.empty()) {
      ComplexMatrix cur = queue.back();
      queue.pop_back();
      found.push_back(cur);
      for (const ComplexMatrix& g : gens) {
        ComplexMatrix next = canonicalize(g * cur);
        std::string k = key_of(next);
        if (!seen[k]) {
          seen[k] = true;
          queue.push_back(next);
        }
      }
    }
    if (found.size() != 24) {
      throw SolverError("single-qubit Clifford enumeration failed");
    }
    std::sort(found.begin(), found.end(),
              [&](const ComplexMatrix& a, const ComplexMatrix& b) {
                return key_of(a) < key_of(b);
              });
    return found;
  }();
  return table;
}

// Fixed pre-rotation of the plain recurrence protocol: the bilateral x-axis
// quarter turn maps the odd-parity target onto the even-parity one, where the
// controlled-X parity check operates.
const ComplexMatrix& standard_rotation() {
  static const ComplexMatrix rx = [] {
    ComplexMatrix m(2, 2);
    const Complex mi(0.0, -1.0);
    m << 1, mi, mi, 1;
    m /= std::sqrt(2.0);
    return m;
  }();
  return rx;
}

// Embedded two-qubit Paulis act as signed permutations of the computational
// basis; storing (permutation, phase) turns the 16-term depolarizing sum into
// an O(dim^2) pass instead of 16 matrix products.
struct PauliAction {
  std::vector<int> perm;
  std::vector<Complex> phase;
};

const std::vector<PauliAction>& pauli_actions(int n_qubits, int q_a, int q_b) {
  static std::mutex mu;
  static std::map<std::tuple<int, int, int>, std::vector<PauliAction>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({n_qubits, q_a, q_b});
  if (it != cache.end()) return it->second;

  const int dim = 1 << n_qubits;
  std::vector<PauliAction> actions;
  for (int pa = 0; pa < 4; ++pa) {
    for (int pb = 0; pb < 4; ++pb) {
      PauliAction act;
      act.perm.resize(dim);
      act.phase.resize(dim);
      for (int i = 0; i < dim; ++i) {
        int j = i;
        Complex ph(1.0, 0.0);
        auto apply = [&](int pauli, int qubit) {
          const int bitpos = n_qubits - 1 - qubit;
          const int bit = (j >> bitpos) & 1;
          switch (pauli) {
            case 1:  // X
              j ^= 1 << bitpos;
              break;
            case 2:  // Y
              ph *= bit ? Complex(0.0, -1.0) : Complex(0.0, 1.0);
              j ^= 1 << bitpos;
              break;
            case 3:  // Z
              if (bit) ph = -ph;
              break;
            default:
              break;
          }
        };
        apply(pa, q_a);
        apply(pb, q_b);
        act.perm[i] = j;
        act.phase[i] = ph;
      }
      actions.push_back(std::move(act));
    }
  }
  return cache.emplace(std::make_tuple(n_qubits, q_a, q_b), std::move(actions))
      .first->second;
}

DensityMatrix depolarize_two_qubits(const DensityMatrix& rho, int q_a, int q_b,
                                    double eps) {
  const auto& actions = pauli_actions(rho.n_qubits(), q_a, q_b);
  const ComplexMatrix& m = rho.matrix();
  ComplexMatrix acc = ComplexMatrix::Zero(m.rows(), m.cols());
  for (const PauliAction& act : actions) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        acc(act.perm[i], act.perm[j]) +=
            act.phase[i] * std::conj(act.phase[j]) * m(i, j);
      }
    }
  }
  ComplexMatrix out = (1.0 - eps) * m + (eps / 16.0) * acc;
  DensityMatrix r(rho.n_qubits(), std::move(out), DensityMatrix::Unchecked{});
  r.resymmetrize();
  return r;
}

const ComplexVector& target_ket() {
  static const ComplexVector ket = bell_ket(BellKind::PsiPlus);
  return ket;
}

PurifyOutcome evaluate_purify(const DensityMatrix& rho16, const TwoQubitGate& gate,
                              const ComplexMatrix& rot_a, const ComplexMatrix& rot_b) {
  const ComplexMatrix ra = kron2(rot_a, rot_a);
  const ComplexMatrix rb = kron2(rot_b, rot_b);
  DensityMatrix s = apply_unitary(rho16, ra, {0, 1});
  s = apply_unitary(s, rb, {2, 3});
  s = gate.apply_cx(s, 0, 2);
  s = gate.apply_cx(s, 1, 3);
  const MeasureResult m00 = projective_measure(s, {2, 3}, {0, 0});
  const MeasureResult m11 = projective_measure(s, {2, 3}, {1, 1});

  PurifyOutcome out;
  out.p00 = m00.probability;
  out.p11 = m11.probability;
  out.p_success = out.p00 + out.p11;
  const ComplexMatrix ra_dag = ra.adjoint();
  double weighted = 0.0;
  if (m00.post_state) {
    out.rho00 = apply_unitary(*m00.post_state, ra_dag, {0, 1});
    weighted += out.p00 * fidelity_with_pure(*out.rho00, target_ket());
  }
  if (m11.post_state) {
    out.rho11 = apply_unitary(*m11.post_state, ra_dag, {0, 1});
    weighted += out.p11 * fidelity_with_pure(*out.rho11, target_ket());
  }
  out.kept_fidelity = out.p_success > 1e-15 ? weighted / out.p_success : 0.0;
  return out;
}

// Success-conditioned kept state: the protocol exchanges only the parity of
// the two target-qubit outcomes, so the kept pair is the branch mixture.
DensityMatrix purify_success_state(const PurifyOutcome& o) {
  if (!(o.p_success > 1e-15)) {
    throw SolverError("purification has vanishing success probability");
  }
  ComplexMatrix acc = ComplexMatrix::Zero(4, 4);
  if (o.rho00) acc += (o.p00 / o.p_success) * o.rho00->matrix();
  if (o.rho11) acc += (o.p11 / o.p_success) * o.rho11->matrix();
  DensityMatrix r(2, std::move(acc), DensityMatrix::Unchecked{});
  r.resymmetrize();
  return r;
}

// Outcome-averaged swapped state. Every branch is aligned onto the target by
// its Pauli correction, and averaging over the (classically known) outcomes
// is exact for the Bell-diagonal states this protocol produces.
DensityMatrix swap_average_state(const DensityMatrix& left, const DensityMatrix& right,
                                 const TwoQubitGate& gate) {
  DensityMatrix s = gate.apply_cx(tensor_product(left, right), 1, 2);
  s = apply_unitary(s, hadamard(), {1});
  ComplexMatrix acc = ComplexMatrix::Zero(4, 4);
  const std::array<ComplexMatrix, 4> corrections{pauli_x(), pauli_i(), pauli_y(),
                                                 pauli_z()};
  for (int m1 = 0; m1 < 2; ++m1) {
    for (int m2 = 0; m2 < 2; ++m2) {
      const MeasureResult m = projective_measure(s, {1, 2}, {m1, m2});
      if (!m.post_state) continue;
      const DensityMatrix fixed =
          apply_unitary(*m.post_state, corrections[2 * m1 + m2], {1});
      acc += m.probability * fixed.matrix();
    }
  }
  DensityMatrix r(2, std::move(acc), DensityMatrix::Unchecked{});
  r.resymmetrize();
  return r;
}

}  // namespace

int NetworkConfig::levels() const {
  int lv = 0;
  int n = n_segments;
  while (n > 1) {
    n >>= 1;
    ++lv;
  }
  return lv;
}

void NetworkConfig::validate() const {
  if (n_segments < 1 || (n_segments & (n_segments - 1)) != 0) {
    throw ConfigError("n_segments must be a power of two");
  }
  if (!(spacing_km > 0.0)) throw ConfigError("spacing_km must be positive");
  if (!(slot_time_s > 0.0)) throw ConfigError("slot_time_s must be positive");
  if (qubits_per_station != 0 && qubits_per_station < default_qubits()) {
    throw ConfigError("stations need at least 2 + 2 log2 N qubits");
  }
}

void WhiteNoise::validate() const {
  if (!(eps_init >= 0.0 && eps_init <= 1.0) ||
      !(eps_gate >= 0.0 && eps_gate <= 1.0)) {
    throw ConfigError("white-noise strengths must lie in [0, 1]");
  }
  if (!(ps > 0.0 && ps <= 1.0)) {
    throw ConfigError("generation probability must lie in (0, 1]");
  }
}

TwoQubitGate TwoQubitGate::ideal() { return TwoQubitGate{}; }

TwoQubitGate TwoQubitGate::white(double eps_gate) {
  if (!(eps_gate >= 0.0 && eps_gate <= 1.0)) {
    throw ConfigError("gate depolarization must lie in [0, 1]");
  }
  TwoQubitGate g;
  g.eps_gate_ = eps_gate;
  return g;
}

TwoQubitGate TwoQubitGate::physical(czgate::GateChannel channel) {
  TwoQubitGate g;
  g.channel_ = std::move(channel);
  return g;
}

DensityMatrix TwoQubitGate::apply_cx(const DensityMatrix& rho, int control,
                                     int target) const {
  if (channel_) return czgate::noisy_cx(rho, *channel_, control, target);
  DensityMatrix out = apply_unitary(rho, cnot(), {control, target});
  if (eps_gate_ > 0.0) out = depolarize_two_qubits(out, control, target, eps_gate_);
  return out;
}

void ProtocolPolicy::validate(const NetworkConfig& cfg) const {
  if (static_cast<int>(purification_rounds.size()) != cfg.levels() + 1) {
    throw ConfigError("policy must list one purification count per level 0..log2 N");
  }
  for (int r : purification_rounds) {
    if (r < 0) throw ConfigError("purification counts must be non-negative");
  }
}

DensityMatrix white_noise(const DensityMatrix& rho, double eps) {
  if (rho.n_qubits() != 2) {
    throw ConfigError("white_noise acts on two-qubit states");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw ConfigError("white-noise strength must lie in [0, 1]");
  }
  ComplexMatrix m = (1.0 - eps) * rho.matrix() +
                    (eps / 4.0) * ComplexMatrix::Identity(4, 4);
  return DensityMatrix(2, std::move(m));
}

CompiledNoise CompiledNoise::compile(const NoiseModel& noise) {
  CompiledNoise out;
  if (const WhiteNoise* w = std::get_if<WhiteNoise>(&noise)) {
    w->validate();
    out.ps = w->ps;
    out.pair_state = white_noise(
        DensityMatrix::pure(2, bell_ket(BellKind::PsiPlus)), w->eps_init);
    out.gate = TwoQubitGate::white(w->eps_gate);
  } else {
    const Physical& ph = std::get<Physical>(noise);
    ph.link.validate();
    const entangle::PostSelectionResult sel = entangle::post_selected_state(ph.link);
    out.ps = sel.ps;
    out.pair_state = sel.rho12;
    out.gate = TwoQubitGate::physical(ph.gate);
  }
  return out;
}

std::optional<PairRecord> attempt_generation(const CompiledNoise& noise,
                                             std::mt19937_64& rng) {
  if (canonical_uniform(rng) >= noise.ps) return std::nullopt;
  PairRecord rec;
  rec.rho = noise.pair_state;
  return rec;
}

std::optional<PairRecord> attempt_generation(const NoiseModel& noise,
                                             std::mt19937_64& rng) {
  return attempt_generation(CompiledNoise::compile(noise), rng);
}

PurifyOutcome purify_map(const DensityMatrix& a, const DensityMatrix& b,
                         const TwoQubitGate& gate, PreRotation mode) {
  if (a.n_qubits() != 2 || b.n_qubits() != 2) {
    throw ConfigError("purification expects two-qubit pair states");
  }
  const DensityMatrix rho16 = tensor_product(a, b);
  if (mode == PreRotation::Standard) {
    return evaluate_purify(rho16, gate, standard_rotation(), standard_rotation());
  }
  const auto& cliffords = single_qubit_cliffords();
  PurifyOutcome best;
  double best_f = -1.0;
  for (const ComplexMatrix& ca : cliffords) {
    for (const ComplexMatrix& cb : cliffords) {
      PurifyOutcome cand = evaluate_purify(rho16, gate, ca, cb);
      if (cand.p_success > 1e-12 && cand.kept_fidelity > best_f + 1e-12) {
        best_f = cand.kept_fidelity;
        best = std::move(cand);
      }
    }
  }
  if (best_f < 0.0) {
    throw SolverError("no pre-rotation yields a non-vanishing success probability");
  }
  return best;
}

std::optional<PairRecord> purify(const PairRecord& a, const PairRecord& b,
                                 const TwoQubitGate& gate, std::mt19937_64& rng,
                                 PreRotation mode) {
  if (a.level != b.level) throw ConfigError("purification level mismatch");
  if (a.endpoints != b.endpoints) {
    throw ConfigError("purification requires pairs with identical endpoints");
  }
  const PurifyOutcome outcome = purify_map(a.rho, b.rho, gate, mode);
  if (canonical_uniform(rng) >= outcome.p_success) return std::nullopt;
  PairRecord kept;
  kept.level = a.level;
  kept.endpoints = a.endpoints;
  kept.rho = purify_success_state(outcome);
  kept.purification_round = std::max(a.purification_round, b.purification_round) + 1;
  kept.ready_at = std::max(a.ready_at, b.ready_at);
  return kept;
}

PairRecord swap(const PairRecord& a, const PairRecord& b, const TwoQubitGate& gate,
                std::mt19937_64& /*rng: every outcome branch is aligned, so the
                                    swapped state needs no sampling*/) {
  if (a.level != b.level) throw ConfigError("swap level mismatch");
  int common = -1;
  int shared = 0;
  for (int ea : a.endpoints) {
    for (int eb : b.endpoints) {
      if (ea == eb) {
        common = ea;
        ++shared;
      }
    }
  }
  if (shared != 1) {
    throw ConfigError("swap requires pairs sharing exactly one station");
  }
  auto other = [common](const PairRecord& r) {
    return r.endpoints[0] == common ? r.endpoints[1] : r.endpoints[0];
  };
  const PairRecord& left = other(a) < other(b) ? a : b;
  const PairRecord& right = other(a) < other(b) ? b : a;
  const int outer_left = other(left);
  const int outer_right = other(right);
  if (!(outer_left < common && common < outer_right)) {
    throw ConfigError("swap endpoints do not form a chain");
  }

  PairRecord out;
  out.level = a.level + 1;
  out.endpoints = {outer_left, outer_right};
  out.rho = swap_average_state(left.rho, right.rho, gate);
  out.purification_round = 0;
  out.ready_at = std::max(a.ready_at, b.ready_at);
  return out;
}

namespace {

struct CachedPurify {
  double p_success;
  DensityMatrix state;
};

// A storage slot, identified by station, nesting level, and which side of the
// station the served span lies on (0 = toward lower stations, 1 = higher).
struct Slot {
  int station;
  int level;
  int side;
};

// Event-driven scheduler built around entanglement pumping. Spans follow a
// fixed binary tree over the segments, and each span owns the storage slot
// facing it at either end, holding at most one accumulator pair. Fresh pairs
// of the same span, which live on the generation qubits at level 0 or on the
// storage inherited from their swap inputs above, either claim the empty
// slots or are consumed on the spot to pump the accumulator one purification
// round higher. Once sibling accumulators have finished their rounds they
// swap at the midpoint station; the merged pair keeps the outer storage, and
// the midpoint slots free when the outcome is heralded, one slot per spanned
// segment later. A station terminating spans up to level m thus touches two
// generation qubits and at most 2 (m + 1) storage qubits at once, which stays
// inside the 2 + 2 log2 N qubit budget.
class Simulator {
 public:
  Simulator(const NetworkConfig& cfg, const ProtocolPolicy& policy,
            const NoiseModel& noise, int n_deliver, std::uint64_t seed)
      : cfg_(cfg),
        policy_(policy),
        noise_(CompiledNoise::compile(noise)),
        n_deliver_(n_deliver),
        rng_(math::make_stream_engine(seed, 0)) {
    cfg_.validate();
    policy_.validate(cfg_);
    if (n_deliver_ < 5) {
      throw ConfigError("a run must deliver at least five pairs");
    }
    levels_ = cfg_.levels();
    parked_.resize(cfg_.n_segments);
    slots_.assign(
        cfg_.n_segments + 1,
        std::vector<std::array<bool, 2>>(levels_ + 1, {false, false}));
  }

  SimResult run() {
    constexpr std::int64_t kSlotBudget = 5'000'000;
    while (static_cast<int>(deliveries_.size()) < n_deliver_) {
      if (t_ > kSlotBudget) {
        throw SolverError("simulation exceeded its slot budget without "
                          "delivering enough pairs");
      }
      step();
    }
    return summarize();
  }

 private:
  struct Live {
    PairRecord rec;
    std::uint64_t uid;
    bool accumulator;         // seated in its span's slots, target of pumping
    std::vector<Slot> holds;  // storage kept busy until this pair moves on
  };

  void step() {
    process_releases();
    deliver_ready();
    intake();
    swap_ready();
    generate();
    ++t_;
  }

  void process_releases() {
    for (auto it = releases_.begin();
         it != releases_.end() && it->first <= t_; it = releases_.erase(it)) {
      for (const Slot& s : it->second) occupied(s) = false;
    }
  }

  // Top-level pairs leave the network once their pumping rounds are done.
  void deliver_ready() {
    for (auto it = pairs_.begin(); it != pairs_.end();) {
      const PairRecord& rec = it->rec;
      if (rec.level == levels_ && rec.ready_at <= t_ &&
          rec.purification_round >= policy_.purification_rounds[levels_]) {
        deliveries_.push_back(rec.ready_at);
        delivered_fidelity_.push_back(fidelity_with_pure(rec.rho, target_ket()));
        release_now(it->holds);
        it = pairs_.erase(it);
      } else {
        ++it;
      }
    }
  }

  // Fresh pairs claim their span's empty slots or pump the seated
  // accumulator. Swap products go first in uid order, then the level-0 pairs
  // still parked on the generation qubits; a parked pair that a single-segment
  // network is already done with is handed out directly.
  void intake() {
    std::vector<std::uint64_t> fresh;
    for (const Live& live : pairs_) {
      if (!live.accumulator && live.rec.ready_at <= t_) fresh.push_back(live.uid);
    }
    for (std::uint64_t uid : fresh) advance_fresh(uid);

    for (int seg = 0; seg < cfg_.n_segments; ++seg) {
      std::optional<PairRecord>& parked = parked_[seg];
      if (!parked || parked->ready_at > t_) continue;
      if (levels_ == 0 &&
          parked->purification_round >= policy_.purification_rounds[0]) {
        deliveries_.push_back(parked->ready_at);
        delivered_fidelity_.push_back(
            fidelity_with_pure(parked->rho, target_ket()));
        parked.reset();
        continue;
      }
      Live* accum = find_accumulator(0, seg, seg + 1);
      if (!accum) {
        const Slot left{seg, 0, 1};
        const Slot right{seg + 1, 0, 0};
        if (occupied(left) || occupied(right)) continue;
        occupied(left) = occupied(right) = true;
        pairs_.push_back({std::move(*parked), next_uid_++, true, {left, right}});
        parked.reset();
      } else if (pumpable(*accum)) {
        const std::uint64_t accum_uid = accum->uid;
        const PairRecord fresh_rec = std::move(*parked);
        parked.reset();
        pump(accum_uid, fresh_rec, {});
      }
    }
  }

  // Move one fresh swap product along: claim the span slots if they are free,
  // pump the accumulator seated there if it is ready for another round, or
  // keep waiting on the inherited storage.
  void advance_fresh(std::uint64_t uid) {
    Live* live = find(uid);
    if (!live) return;
    const int level = live->rec.level;
    const int a = live->rec.endpoints[0];
    const int b = live->rec.endpoints[1];
    Live* accum = find_accumulator(level, a, b);
    if (!accum) {
      const Slot left{a, level, 1};
      const Slot right{b, level, 0};
      if (occupied(left) || occupied(right)) return;
      occupied(left) = occupied(right) = true;
      release_now(live->holds);
      live->holds = {left, right};
      live->accumulator = true;
    } else if (pumpable(*accum)) {
      const std::uint64_t accum_uid = accum->uid;
      const Live fresh = take_live(uid);
      pump(accum_uid, fresh.rec, fresh.holds);
    }
  }

  bool pumpable(const Live& accum) const {
    return accum.rec.ready_at <= t_ &&
           accum.rec.purification_round <
               policy_.purification_rounds[accum.rec.level];
  }

  // Burn the fresh pair into the accumulator. Both ends learn the outcome one
  // slot per spanned segment later; until then the fresh pair's storage stays
  // busy, and on failure the accumulator's slots do too.
  void pump(std::uint64_t accum_uid, const PairRecord& fresh,
            const std::vector<Slot>& fresh_holds) {
    Live* accum = find(accum_uid);
    const std::int64_t done = t_ + (std::int64_t{1} << accum->rec.level);
    schedule_release(done, fresh_holds);
    const CachedPurify& out = cached_purify(accum->rec.rho, fresh.rho);
    if (canonical_uniform(rng_) < out.p_success) {
      accum->rec.rho = out.state;
      accum->rec.purification_round += 1;
      accum->rec.ready_at = done;
    } else {
      schedule_release(done, accum->holds);
      take_live(accum_uid);
    }
  }

  // Siblings in the binary tree swap as soon as both accumulators are ready
  // and fully pumped.
  void swap_ready() {
    for (int level = 0; level < levels_; ++level) {
      const int span = 1 << level;
      for (int a = 0; a + 2 * span <= cfg_.n_segments; a += 2 * span) {
        const int mid = a + span;
        Live* left = find_accumulator(level, a, mid);
        Live* right = find_accumulator(level, mid, a + 2 * span);
        if (!left || !right) continue;
        if (left->rec.ready_at > t_ || right->rec.ready_at > t_) continue;
        const int need = policy_.purification_rounds[level];
        if (left->rec.purification_round < need ||
            right->rec.purification_round < need) {
          continue;
        }
        execute_swap(left->uid, right->uid);
      }
    }
  }

  void execute_swap(std::uint64_t uid_left, std::uint64_t uid_right) {
    const Live left = take_live(uid_left);
    const Live right = take_live(uid_right);
    const int level = left.rec.level;
    const int mid = left.rec.endpoints[1];
    const std::int64_t done = t_ + (std::int64_t{1} << level);

    PairRecord merged;
    merged.level = level + 1;
    merged.endpoints = {left.rec.endpoints[0], right.rec.endpoints[1]};
    merged.rho = cached_swap(left.rec.rho, right.rec.rho);
    merged.purification_round = 0;
    merged.ready_at = done;

    // The merged pair inherits the outer storage; the two measured qubits at
    // the midpoint free once the outcome arrives.
    std::vector<Slot> keep;
    for (const Live* in : {&left, &right}) {
      for (const Slot& s : in->holds) {
        if (s.station == mid) {
          schedule_release(done, {s});
        } else {
          keep.push_back(s);
        }
      }
    }
    pairs_.push_back({std::move(merged), next_uid_++, false, std::move(keep)});
  }

  void generate() {
    for (int seg = 0; seg < cfg_.n_segments; ++seg) {
      if (parked_[seg]) continue;
      if (canonical_uniform(rng_) >= noise_.ps) continue;
      PairRecord rec;
      rec.level = 0;
      rec.endpoints = {seg, seg + 1};
      rec.rho = noise_.pair_state;
      rec.purification_round = 0;
      rec.ready_at = t_ + 1;
      parked_[seg] = std::move(rec);
    }
  }

  bool& occupied(const Slot& s) { return slots_[s.station][s.level][s.side]; }

  void release_now(const std::vector<Slot>& holds) {
    for (const Slot& s : holds) occupied(s) = false;
  }

  void schedule_release(std::int64_t when, const std::vector<Slot>& holds) {
    if (holds.empty()) return;
    auto& bucket = releases_[when];
    bucket.insert(bucket.end(), holds.begin(), holds.end());
  }

  Live* find(std::uint64_t uid) {
    for (Live& live : pairs_) {
      if (live.uid == uid) return &live;
    }
    return nullptr;
  }

  Live* find_accumulator(int level, int a, int b) {
    for (Live& live : pairs_) {
      if (live.accumulator && live.rec.level == level &&
          live.rec.endpoints[0] == a && live.rec.endpoints[1] == b) {
        return &live;
      }
    }
    return nullptr;
  }

  Live take_live(std::uint64_t uid) {
    for (auto it = pairs_.begin(); it != pairs_.end(); ++it) {
      if (it->uid == uid) {
        Live live = std::move(*it);
        pairs_.erase(it);
        return live;
      }
    }
    throw SolverError("internal scheduling error: pair vanished");
  }

  const CachedPurify& cached_purify(const DensityMatrix& a, const DensityMatrix& b) {
    const std::string key = state_key(a) + state_key(b);
    auto it = purify_cache_.find(key);
    if (it == purify_cache_.end()) {
      const PurifyOutcome out = purify_map(a, b, noise_.gate, PreRotation::Optimized);
      it = purify_cache_
               .emplace(key, CachedPurify{out.p_success, purify_success_state(out)})
               .first;
    }
    return it->second;
  }

  const DensityMatrix& cached_swap(const DensityMatrix& left,
                                   const DensityMatrix& right) {
    const std::string key = state_key(left) + state_key(right);
    auto it = swap_cache_.find(key);
    if (it == swap_cache_.end()) {
      it = swap_cache_.emplace(key, swap_average_state(left, right, noise_.gate))
               .first;
    }
    return it->second;
  }

  SimResult summarize() const {
    std::vector<double> intervals;
    std::int64_t prev = 0;
    for (std::int64_t d : deliveries_) {
      intervals.push_back((d - prev) * cfg_.slot_time_s);
      prev = d;
    }
    SimResult r;
    r.pairs_delivered = static_cast<int>(deliveries_.size());
    r.mean_interval_s =
        std::accumulate(intervals.begin(), intervals.end(), 0.0) / intervals.size();
    double ss = 0.0;
    for (double v : intervals) ss += math::sq(v - r.mean_interval_s);
    r.std_interval_s =
        intervals.size() > 1 ? std::sqrt(ss / (intervals.size() - 1)) : 0.0;
    r.rate_hz = 1.0 / r.mean_interval_s;
    r.final_fidelity =
        std::accumulate(delivered_fidelity_.begin(), delivered_fidelity_.end(), 0.0) /
        delivered_fidelity_.size();
    return r;
  }

  NetworkConfig cfg_;
  ProtocolPolicy policy_;
  CompiledNoise noise_;
  int n_deliver_;
  std::mt19937_64 rng_;
  int levels_ = 0;
  std::int64_t t_ = 0;
  std::uint64_t next_uid_ = 0;
  std::vector<std::optional<PairRecord>> parked_;
  std::vector<Live> pairs_;
  std::vector<std::vector<std::array<bool, 2>>> slots_;
  std::map<std::int64_t, std::vector<Slot>> releases_;
  std::vector<std::int64_t> deliveries_;
  std::vector<double> delivered_fidelity_;
  std::unordered_map<std::string, CachedPurify> purify_cache_;
  std::unordered_map<std::string, DensityMatrix> swap_cache_;
};

}  // namespace

SimResult run_simulation(const NetworkConfig& cfg, const ProtocolPolicy& policy,
                         const NoiseModel& noise, int n_deliver,
                         std::uint64_t seed) {
  return Simulator(cfg, policy, noise, n_deliver, seed).run();
}

ProtocolPolicy policy_for_target(const NetworkConfig& cfg, const NoiseModel& noise,
                                 double target_fidelity, int max_rounds_per_level) {
  cfg.validate();
  if (!(target_fidelity > 0.25 && target_fidelity < 1.0)) {
    throw ConfigError("target fidelity must lie in (0.25, 1)");
  }
  const CompiledNoise compiled = CompiledNoise::compile(noise);
  const int levels = cfg.levels();

  std::unordered_map<std::string, DensityMatrix> purify_memo;
  std::unordered_map<std::string, DensityMatrix> swap_memo;
  auto purified = [&](const DensityMatrix& accum,
                      const DensityMatrix& fresh) -> const DensityMatrix& {
    const std::string key = state_key(accum) + state_key(fresh);
    auto it = purify_memo.find(key);
    if (it == purify_memo.end()) {
      it = purify_memo
               .emplace(key, purify_success_state(purify_map(
                                 accum, fresh, compiled.gate,
                                 PreRotation::Optimized)))
               .first;
    }
    return it->second;
  };
  auto swapped = [&](const DensityMatrix& s) -> const DensityMatrix& {
    const std::string key = state_key(s);
    auto it = swap_memo.find(key);
    if (it == swap_memo.end()) {
      it = swap_memo.emplace(key, swap_average_state(s, s, compiled.gate)).first;
    }
    return it->second;
  };
  auto final_fidelity = [&](const std::vector<int>& rounds) {
    // Mirrors the scheduler: each round pumps the accumulator with a fresh
    // pair in the state a span starts the level with.
    DensityMatrix s = compiled.pair_state;
    for (int lv = 0; lv <= levels; ++lv) {
      const DensityMatrix fresh = s;
      for (int k = 0; k < rounds[lv]; ++k) s = purified(s, fresh);
      if (lv < levels) s = swapped(s);
    }
    return fidelity_with_pure(s, bell_ket(BellKind::PsiPlus));
  };

  std::vector<int> rounds(levels + 1, 0);
  double best = final_fidelity(rounds);
  while (best < target_fidelity) {
    int pick = -1;
    double pick_f = best;
    for (int lv = 0; lv <= levels; ++lv) {
      if (rounds[lv] >= max_rounds_per_level) continue;
      ++rounds[lv];
      const double f = final_fidelity(rounds);
      --rounds[lv];
      if (f > pick_f + 1e-12) {
        pick_f = f;
        pick = lv;
      }
    }
    if (pick < 0) {
      throw ConfigError("purification cannot reach the target fidelity for "
                        "this noise model");
    }
    ++rounds[pick];
    best = pick_f;
  }
  return ProtocolPolicy{rounds};
}

PowerLawFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("power-law fit needs at least two matching samples");
  }
  const std::size_t n = x.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw ConfigError("power-law fit requires positive samples");
    }
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("power-law fit requires distinct abscissae");

  PowerLawFit fit;
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  if (n > 2) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ss += math::sq(ly[i] - fit.intercept - fit.exponent * lx[i]);
    }
    fit.stderr_exponent = std::sqrt(ss / static_cast<double>(n - 2) / sxx);
  }
  return fit;
}

RateStudy rate_study(const NetworkConfig& cfg, const ProtocolPolicy& policy,
                     const WhiteNoise& base_noise, const std::vector<double>& ps_grid,
                     int n_deliver, int trials_per_point, std::uint64_t seed,
                     int n_workers) {
  cfg.validate();
  policy.validate(cfg);
  if (ps_grid.size() < 4) {
    throw ConfigError("rate study needs a grid of at least four points");
  }
  if (trials_per_point < 1) throw ConfigError("trials_per_point must be positive");

  struct Job {
    std::size_t point;
    int trial;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < ps_grid.size(); ++p) {
    for (int tr = 0; tr < trials_per_point; ++tr) jobs.push_back({p, tr});
  }
  std::vector<SimResult> results(jobs.size());
  std::atomic<std::size_t> cursor{0};
  std::mutex fail_mutex;
  std::exception_ptr failure;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const Job& job = jobs[i];
        WhiteNoise noise = base_noise;
        noise.ps = ps_grid[job.point];
        std::uint64_t stream = seed;
        math::splitmix64(stream);
        const std::uint64_t run_seed =
            stream + 0x9E3779B97F4A7C15ULL * (job.point + 1) +
            0xD1B54A32D192ED03ULL * static_cast<std::uint64_t>(job.trial + 1);
        results[i] = run_simulation(cfg, policy, noise, n_deliver, run_seed);
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

  RateStudy study;
  std::vector<double> mean_rates(ps_grid.size(), 0.0);
  std::vector<double> mean_fid(ps_grid.size(), 0.0);
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    mean_rates[jobs[i].point] += results[i].rate_hz / trials_per_point;
    mean_fid[jobs[i].point] += results[i].final_fidelity / trials_per_point;
  }
  for (std::size_t p = 0; p < ps_grid.size(); ++p) {
    study.rows.push_back({ps_grid[p], mean_rates[p], mean_fid[p]});
  }
  study.fit = fit_power_law(ps_grid, mean_rates);
  return study;
}

}  // namespace qbr::repeater

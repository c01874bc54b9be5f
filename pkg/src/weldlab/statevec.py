"""Ground-truth executor: exact sparse state-vector simulation.

States are sparse maps from basis keys (ints, wire i = bit i of the key) to
complex amplitudes.  Norm is asserted after every layer (drift <= 1e-9) and
never renormalized; amplitudes below 1e-14 are pruned.  Discarded wires stay
in the key (deferred discard) but leave the ``live`` list, so outputs and
measurements marginalize over them.

Query gates XOR the oracle answer into the y-register, so applying the same
query layer twice is the identity.  The executor reads the oracle through
``bbt.answer`` (query gates are quantum queries, accounted as gates by
circuits.accounting, not on the classical per-handle counter); classical
tiers of a hybrid circuit make real classical queries through a handle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from . import circuits as C
from .rng import derive_seed, make_rng
from .tree import BlackBoxTree, OracleHandle

PRUNE_TOL = 1e-14
NORM_TOL = 1e-9
EXACT_WIDTH_CAP = 22

_SQRT_HALF = 1 / math.sqrt(2)


@dataclass
class PureState:
    """Sparse pure state.  ``live[j]`` is the physical wire of logical wire j."""

    width: int
    amps: dict[int, complex]
    live: tuple[int, ...]

    @classmethod
    def basis(cls, width: int, key: int) -> "PureState":
        return cls(width=width, amps={key: 1.0 + 0j}, live=tuple(range(width)))

    @property
    def logical_width(self) -> int:
        return len(self.live)

    def norm_sq(self) -> float:
        return sum((a * a.conjugate()).real for a in self.amps.values())

    def assert_normalized(self, tol: float = NORM_TOL) -> None:
        nrm = self.norm_sq()
        if abs(nrm - 1.0) > tol:
            raise AssertionError(f"state norm drifted: |psi|^2 = {nrm!r}")

    def logical_key(self, key: int) -> int:
        out = 0
        for j, phys in enumerate(self.live):
            out |= ((key >> phys) & 1) << j
        return out

    def marginal(self) -> dict[int, float]:
        """Probability of each logical outcome, dead wires traced out."""
        probs: dict[int, float] = {}
        for key, a in self.amps.items():
            z = self.logical_key(key)
            probs[z] = probs.get(z, 0.0) + (a * a.conjugate()).real
        return probs


@dataclass
class OutputDistribution:
    width: int
    probs: dict[int, float] = field(default_factory=dict)

    def validate(self, tol: float = NORM_TOL) -> None:
        if any(p < -1e-12 for p in self.probs.values()):
            raise AssertionError("negative probability")
        total = sum(self.probs.values())
        if abs(total - 1.0) > tol:
            raise AssertionError(f"probabilities sum to {total!r}")


def tv_distance(p: dict[int, float], q: dict[int, float]) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _prune(amps: dict[int, complex]) -> dict[int, complex]:
    return {k: a for k, a in amps.items() if abs(a) >= PRUNE_TOL}


def _bits_to_int(key: int, phys: tuple[int, ...]) -> int:
    v = 0
    for j, w in enumerate(phys):
        v |= ((key >> w) & 1) << j
    return v


def classical_query_answer(bbt: BlackBoxTree, key: int,
                           phys_x: tuple[int, ...], phys_c: tuple[int, ...]) -> int:
    x = _bits_to_int(key, phys_x)
    c = _bits_to_int(key, phys_c)
    return bbt.answer(x, c)


def apply_layer(state: PureState, lay: C.Layer, bbt: BlackBoxTree | None = None,
                n: int | None = None) -> PureState:
    """Apply one layer exactly; pure (returns a new state).

    ``n`` (label length parameter) is required when the layer has query
    gates, as is ``bbt``.
    """
    if state.logical_width != lay.width_in:
        raise ValueError(f"layer expects {lay.width_in} wires, state has "
                         f"{state.logical_width}")
    prev_norm = state.norm_sq()
    width = state.width
    live = list(state.live)
    anc_phys: dict[int, int] = {}
    for gate in lay.gates:
        if gate.kind == C.GateKind.ANCILLA:
            anc_phys[gate.wires[0]] = width
            width += 1

    def phys(w: int) -> int:
        return anc_phys[w] if w in anc_phys else live[w]

    amps = dict(state.amps)
    for gate in lay.gates:
        if gate.kind == C.GateKind.ANCILLA or gate.kind == C.GateKind.DISCARD:
            continue
        if gate.kind == C.GateKind.H:
            bit = 1 << phys(gate.wires[0])
            new: dict[int, complex] = {}
            for key, a in amps.items():
                s = a * _SQRT_HALF
                k0, k1 = key & ~bit, key | bit
                if key & bit:
                    new[k0] = new.get(k0, 0j) + s
                    new[k1] = new.get(k1, 0j) - s
                else:
                    new[k0] = new.get(k0, 0j) + s
                    new[k1] = new.get(k1, 0j) + s
            amps = new
        elif gate.kind == C.GateKind.PHASE:
            bit = 1 << phys(gate.wires[0])
            amps = {k: (a * 1j if k & bit else a) for k, a in amps.items()}
        elif gate.kind == C.GateKind.TOFFOLI:
            a_bit = 1 << phys(gate.wires[0])
            b_bit = 1 << phys(gate.wires[1])
            t_bit = 1 << phys(gate.wires[2])
            amps = {(k ^ t_bit if (k & a_bit) and (k & b_bit) else k): a
                    for k, a in amps.items()}
        elif gate.kind == C.GateKind.QUERY:
            if bbt is None or n is None:
                raise ValueError("query gate needs the black-box tree and n")
            xw, cw, yw = C.query_registers(gate, n)
            px = tuple(phys(w) for w in xw)
            pc = tuple(phys(w) for w in cw)
            py = tuple(phys(w) for w in yw)
            new = {}
            for key, a in amps.items():
                ans = classical_query_answer(bbt, key, px, pc)
                k2 = key
                for j, w in enumerate(py):
                    if (ans >> j) & 1:
                        k2 ^= 1 << w
                new[k2] = new.get(k2, 0j) + a
            amps = new
        else:
            raise ValueError(f"unknown gate kind {gate.kind}")

    amps = _prune(amps)
    new_live = []
    for w in range(lay.width_out):
        new_live.append(anc_phys[w] if w in anc_phys else live[w])
    out = PureState(width=width, amps=amps, live=tuple(new_live))
    nrm = out.norm_sq()
    if abs(nrm - prev_norm) > NORM_TOL:
        raise AssertionError(f"layer changed norm by {nrm - prev_norm!r}")
    return out


def sample_outcome(probs: dict[int, float], rng) -> int:
    keys = sorted(probs)
    total = sum(probs[k] for k in keys)
    u = rng.random() * total
    acc = 0.0
    for k in keys:
        acc += probs[k]
        if u <= acc:
            return k
    return keys[-1]


def run_quantum_tier(x: int, t: C.Tier, bbt: BlackBoxTree, seed: int,
                     n: int | None = None) -> int:
    """One tier from basis input ``x``, then a full computational-basis sample."""
    probs = exact_tier_distribution(x, t, bbt, n=n)
    rng = make_rng(seed, "tier-measurement")
    return sample_outcome(probs, rng)


def exact_tier_distribution(x: int, t: C.Tier, bbt: BlackBoxTree,
                            n: int | None = None) -> dict[int, float]:
    if t.kind != "quantum":
        raise ValueError("quantum tier expected")
    n = bbt.n if n is None else n
    state = PureState.basis(t.width_in, x)
    for lay in t.layers:
        state = apply_layer(state, lay, bbt, n)
    return state.marginal()


def eval_classical_layer(x: int, lay: C.Layer, bbt: BlackBoxTree,
                         handle: OracleHandle | None, n: int) -> int:
    """Classical evaluation on a plain bitstring; queries via ``handle``."""
    out = x
    for gate in lay.gates:
        if gate.kind == C.GateKind.TOFFOLI:
            a, b, t_ = gate.wires
            if (out >> a) & 1 and (out >> b) & 1:
                out ^= 1 << t_
        elif gate.kind == C.GateKind.QUERY:
            xw, cw, yw = C.query_registers(gate, n)
            xv = _bits_to_int(out, xw)
            cv = _bits_to_int(out, cw)
            ans = handle.query(xv, cv) if handle is not None else bbt.answer(xv, cv)
            for j, w in enumerate(yw):
                if (ans >> j) & 1:
                    out ^= 1 << w
        elif gate.kind in (C.GateKind.ANCILLA, C.GateKind.DISCARD):
            pass
        else:
            raise ValueError(f"{gate.kind.value} in a classical layer")
    return out & ((1 << lay.width_out) - 1)


def eval_classical_tier(x: int, t: C.Tier, bbt: BlackBoxTree,
                        handle: OracleHandle | None, n: int) -> int:
    if t.kind != "classical":
        raise ValueError("classical tier expected")
    out = x
    for lay in t.layers:
        out = eval_classical_layer(out, lay, bbt, handle, n)
    return out


def _check_exact_cap(circuit: C.Circuit) -> None:
    widest = max((lay.working_width for t in C._iter_tiers(circuit) for lay in t.layers),
                 default=0)
    if widest > EXACT_WIDTH_CAP:
        raise ValueError(f"exact mode caps working width at {EXACT_WIDTH_CAP}, "
                         f"circuit reaches {widest}")


def run_hybrid(circuit: C.HybridCircuit, bbt: BlackBoxTree, seed: int,
               handle: OracleHandle | None = None) -> int:
    """Sampled execution; input is the all-zeros n-bit string."""
    C.require_valid(circuit)
    x = 0
    for i, t in enumerate(circuit.tiers, start=1):
        x &= (1 << t.width_in) - 1
        if t.kind == "classical":
            x = eval_classical_tier(x, t, bbt, handle, circuit.n)
        else:
            x = run_quantum_tier(x, t, bbt, derive_seed(seed, "tier", i))
    return x


def run_hybrid_exact(circuit: C.HybridCircuit, bbt: BlackBoxTree) -> OutputDistribution:
    """Exact output distribution over the final tier's output bits."""
    C.require_valid(circuit)
    _check_exact_cap(circuit)
    dist: dict[int, float] = {0: 1.0}
    for t in circuit.tiers:
        mask = (1 << t.width_in) - 1
        new: dict[int, float] = {}
        for x, p in dist.items():
            x &= mask
            if t.kind == "classical":
                y = eval_classical_tier(x, t, bbt, None, circuit.n)
                new[y] = new.get(y, 0.0) + p
            else:
                for y, q in exact_tier_distribution(x, t, bbt).items():
                    new[y] = new.get(y, 0.0) + p * q
        dist = new
    out = OutputDistribution(width=circuit.tiers[-1].width_out, probs=dist)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Jozsa execution: R1 measured mid-circuit, R2 stays quantum
# ---------------------------------------------------------------------------

def _collapse_r1(state: PureState, r1: int, half: int) -> PureState:
    """Project R1 (first ``half`` logical wires) onto ``r1`` and renormalize."""
    sel = {}
    for key, a in state.amps.items():
        z = 0
        for j in range(half):
            z |= ((key >> state.live[j]) & 1) << j
        if z == r1:
            sel[key] = a
    nrm = math.sqrt(sum((a * a.conjugate()).real for a in sel.values()))
    if nrm == 0:
        raise AssertionError("measured an outcome of probability zero")
    return PureState(width=state.width, live=state.live,
                     amps={k: a / nrm for k, a in sel.items()})


def _set_r1(state: PureState, x: int, half: int) -> PureState:
    """Overwrite R1 with classical bits ``x`` (post-collapse re-composition)."""
    new: dict[int, complex] = {}
    for key, a in state.amps.items():
        k2 = key
        for j in range(half):
            bit = 1 << state.live[j]
            k2 = (k2 | bit) if (x >> j) & 1 else (k2 & ~bit)
        new[k2] = new.get(k2, 0j) + a
    return PureState(width=state.width, live=state.live, amps=new)


def _r1_marginal(state: PureState, half: int) -> dict[int, float]:
    probs: dict[int, float] = {}
    for key, a in state.amps.items():
        z = 0
        for j in range(half):
            z |= ((key >> state.live[j]) & 1) << j
        probs[z] = probs.get(z, 0.0) + (a * a.conjugate()).real
    return probs


def run_jozsa(circuit: C.JozsaCircuit, bbt: BlackBoxTree, seed: int,
              handle: OracleHandle | None = None) -> int:
    C.require_valid(circuit)
    half = circuit.r1_width
    state = PureState.basis(circuit.n, 0)
    for i, (qt, ct) in enumerate(zip(circuit.quantum_tiers, circuit.classical_tiers),
                                 start=1):
        for lay in qt.layers:
            state = apply_layer(state, lay, bbt, circuit.n)
        rng = make_rng(seed, "r1", i)
        r1 = sample_outcome(_r1_marginal(state, half), rng)
        state = _collapse_r1(state, r1, half)
        x = eval_classical_tier(r1, ct, bbt, handle, circuit.n)
        state = _set_r1(state, x, half)
    rng = make_rng(seed, "final")
    return sample_outcome(state.marginal(), rng)


def run_jozsa_exact(circuit: C.JozsaCircuit, bbt: BlackBoxTree) -> OutputDistribution:
    C.require_valid(circuit)
    _check_exact_cap(circuit)
    half = circuit.r1_width

    def rec(state: PureState, i: int, weight: float, acc: dict[int, float]):
        if i == circuit.eta:
            for z, p in state.marginal().items():
                acc[z] = acc.get(z, 0.0) + weight * p
            return
        qt, ct = circuit.quantum_tiers[i], circuit.classical_tiers[i]
        for lay in qt.layers:
            state = apply_layer(state, lay, bbt, circuit.n)
        for r1, p in sorted(_r1_marginal(state, half).items()):
            if p <= 0:
                continue
            branch = _collapse_r1(state, r1, half)
            x = eval_classical_tier(r1, ct, bbt, None, circuit.n)
            rec(_set_r1(branch, x, half), i + 1, weight * p, acc)

    acc: dict[int, float] = {}
    rec(PureState.basis(circuit.n, 0), 0, 1.0, acc)
    out = OutputDistribution(width=circuit.g, probs=acc)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Success probability over labelings
# ---------------------------------------------------------------------------

@dataclass
class Estimate:
    value: float
    stderr: float
    trials: int


def success_probability(circuit: C.Circuit, structure, labelings: int, seed: int,
                        label_bits: int | None = None) -> Estimate:
    """Monte Carlo over fresh labelings of the fixed structure.

    Success means the circuit's output (first 2n output bits, zero padded)
    equals the exit vertex's label.  The coloring is drawn once from the
    seed; per-trial labelings use derived seeds.
    """
    from .tree import generate_coloring, generate_labels

    C.require_valid(circuit)
    coloring = generate_coloring(structure, derive_seed(seed, "coloring-pick"))
    mask = (1 << (2 * structure.n if label_bits is None else label_bits)) - 1
    hits = 0
    for t_idx in range(labelings):
        bbt = generate_labels(structure, coloring, derive_seed(seed, "labeling", t_idx),
                              label_bits=label_bits)
        run_seed = derive_seed(seed, "run", t_idx)
        if isinstance(circuit, C.HybridCircuit):
            out = run_hybrid(circuit, bbt, run_seed, handle=bbt.handle())
        else:
            out = run_jozsa(circuit, bbt, run_seed, handle=bbt.handle())
        if (out & mask) == bbt.exit_label():
            hits += 1
    p = hits / labelings
    stderr = math.sqrt(max(p * (1 - p), 1.0 / labelings)) / math.sqrt(labelings)
    return Estimate(value=p, stderr=stderr, trials=labelings)

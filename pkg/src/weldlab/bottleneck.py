"""Information-Bottleneck simulator for polynomially many quantum tiers.

After every simulated layer the dictionary of known vertices is rebuilt
from scratch: only labels that remain guessable from the tier's classical
input (membership probability above tau over trees consistent with the
kept dictionary and the transcript) survive, plus the minimum entrance-
rooted subtree closure.  A label guessable but never actually encountered
forces ABORT, as does a transcript whose consistency ratio falls below the
floor rho.

Computing the consistent-tree sets exactly is doubly exponential, so
they are replaced by seeded Monte Carlo: a batch of trees consistent
with the current dictionary is drawn, the first i tiers are replayed
against each tree with the same seed-tape prefix, and the trees reproducing
the transcript form the acceptance sample.  Replays run the tier pipeline
in the tau=0 degeneration (no pruning, no aborts), which is also the mode
in which the whole bottleneck pipeline is transcript-identical to the
few-tier simulator.

All estimator randomness is purpose-keyed off the master seed; measurement
randomness comes only from the seed tape, one segment per tier, so
rerunning tiers 1..i with the same tape prefix reproduces identical
results regardless of later tape bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import circuits as C
from . import statevec as SV
from .hybrid_sim import (SimContext, SimTranscript, entrance_known,
                         quantum_layer_sim, _quantum_tier_state)
from .known import KnownVertices
from .rng import derive_seed, make_rng
from .tree import BlackBoxTree, EdgeColoring, TreeStructure, sample_consistent


# ---------------------------------------------------------------------------
# Seed tape
# ---------------------------------------------------------------------------

@dataclass
class SeedTape:
    """Explicit random bits; tier i reads only the prefix r_<=i.

    The tape is laid out in segments of n*q*g bits, one per tier; the
    measurement generator for tier i is keyed by the bytes of segment i, so
    it is a function of the prefix alone.
    """

    n: int
    eta: int
    q: int
    g: int
    bits: np.ndarray

    @classmethod
    def generate(cls, master: int, n: int, eta: int, q: int, g: int) -> "SeedTape":
        length = max(n * eta * q * g, eta)
        rng = make_rng(master, "seed-tape")
        bits = rng.integers(0, 2, size=length, dtype=np.uint8)
        return cls(n=n, eta=eta, q=q, g=g, bits=bits)

    @property
    def segment_len(self) -> int:
        return max(self.n * self.q * self.g, 1)

    def __len__(self) -> int:
        return len(self.bits)

    def prefix(self, i: int) -> np.ndarray:
        return self.bits[: i * self.segment_len]

    def tier_seed(self, i: int) -> int:
        """64-bit seed folded from tier i's segment (1-based)."""
        seg = self.bits[(i - 1) * self.segment_len: i * self.segment_len]
        acc = 0
        for byte in np.packbits(seg).tobytes():
            acc = derive_seed(acc, byte)
        return derive_seed(acc, "tape-tier", i)

    def with_suffix_scrambled(self, i: int, master: int) -> "SeedTape":
        """Same prefix r_<=i, fresh bits afterwards (for determinism tests)."""
        other = SeedTape.generate(master, self.n, self.eta, self.q, self.g)
        bits = self.bits.copy()
        cut = i * self.segment_len
        bits[cut:] = other.bits[cut:]
        return SeedTape(self.n, self.eta, self.q, self.g, bits)


# ---------------------------------------------------------------------------
# Configuration and result records
# ---------------------------------------------------------------------------

@dataclass
class BottleneckConfig:
    """Thresholds and sampling budgets; defaults follow the source defaults.

    tau defaults to 2^(-n/100); rho is carried as log2 (its default
    -n(g+|r|) underflows a float).  tau=0 short-circuits to the keep-
    everything degeneration.
    """

    tau: float | None = None
    rho_log2: float | None = None
    sample_budget: int = 24
    fresh_candidates: int = 4
    mode: str = "labelings"
    instrument: bool = True

    def resolved_tau(self, n: int) -> float:
        return 2 ** (-n / 100) if self.tau is None else self.tau

    def resolved_rho_log2(self, n: int, g: int, tape_len: int) -> float:
        if self.rho_log2 is not None:
            return self.rho_log2
        return -float(n) * (g + tape_len)


@dataclass
class EstimateResult:
    value: float | None
    stderr: float | None
    accepted: int
    attempted: int

    @property
    def conclusive(self) -> bool:
        return self.value is not None


@dataclass
class CallRecord:
    tier: int
    layer: int              # -1 for the tier-start call
    iterations: int
    aborted: bool
    v_current: int
    v_out: int
    v_hist: int
    ratio: float | None
    ratio_stderr: float | None = None


class Abort:
    """First-class ABORT value (not an exception)."""

    def __init__(self, reason: str):
        self.reason = reason

    def __repr__(self):
        return f"Abort({self.reason!r})"


@dataclass
class BottleneckResult:
    output: int
    known: KnownVertices | None
    hist: KnownVertices | None
    transcript: SimTranscript
    calls: list[CallRecord]
    aborted: bool
    abort_reason: str | None = None

    def report_json(self) -> str:
        """Per-call report: tier, layer, aborts, loop iterations, set sizes,
        and the consistency-ratio estimates with their stderr."""
        import json
        doc = {
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "output": self.output,
            "v_known": None if self.known is None else self.known.size(),
            "v_hist": None if self.hist is None else self.hist.size(),
            "calls": [{"tier": c.tier, "layer": c.layer,
                       "loop_iterations": c.iterations, "aborted": c.aborted,
                       "v_current": c.v_current, "v_out": c.v_out,
                       "v_hist": c.v_hist, "ratio": c.ratio,
                       "ratio_stderr": c.ratio_stderr}
                      for c in self.calls],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Estimation environment: sampling + replay
# ---------------------------------------------------------------------------

@dataclass
class EstimatorEnv:
    """Everything the Monte Carlo estimators need that is not the secret tree.

    In "labelings" mode the fixed structure and coloring are supplied (the
    transcript distribution of Definition-style experiments varies labelings
    of a fixed tree); in "structures" mode fresh weldings are completed
    around the conditioning dictionary.
    """

    circuit: C.HybridCircuit
    tape: SeedTape
    n: int
    label_bits: int
    seed: int
    structure: TreeStructure | None = None
    coloring: EdgeColoring | None = None
    call_counter: int = 0

    def next_call_id(self) -> int:
        self.call_counter += 1
        return self.call_counter


def replay_prefix(circuit: C.HybridCircuit, bbt: BlackBoxTree, tiers: int,
                  tape: SeedTape) -> int:
    """Deterministic tau=0 run of the first ``tiers`` tiers against ``bbt``."""
    ctx = SimContext.fresh(bbt, instrument=False)
    V = entrance_known(ctx)
    x = 0
    for j, t in enumerate(circuit.tiers[:tiers], start=1):
        ctx.tier_index = j
        x &= (1 << t.width_in) - 1
        probs, V = _quantum_tier_state(t, x, V, ctx)
        x = SV.sample_outcome(probs, make_rng(tape.tier_seed(j), "sim-tier-measure"))
    return x


def _sample_accepted_trees(V: KnownVertices, x: int, i: int, env: EstimatorEnv,
                           cfg: BottleneckConfig, call_id: int,
                           ) -> tuple[list[set[int]], int]:
    """Label sets of sampled consistent trees whose replay reproduces x."""
    accepted: list[set[int]] = []
    for s in range(cfg.sample_budget):
        seed_s = derive_seed(env.seed, "estimator", call_id, i, s)
        P = sample_consistent(V, env.n, seed_s, mode=cfg.mode,
                              structure=env.structure, coloring=env.coloring,
                              label_bits=env.label_bits)
        xhat = replay_prefix(env.circuit, P, i, env.tape)
        if xhat == x:
            accepted.append(set(int(l) for l in P.labels))
    return accepted, cfg.sample_budget


def estimate_membership_probability(V: KnownVertices, x: int, i: int, b: int,
                                    env: EstimatorEnv, cfg: BottleneckConfig,
                                    call_id: int | None = None) -> EstimateResult:
    """P[b is a valid label] over consistent trees reproducing transcript x."""
    inv = (1 << env.label_bits) - 1
    if b == inv:
        return EstimateResult(0.0, 0.0, 0, 0)
    if b == 0 or b in V.known_labels():
        return EstimateResult(1.0, 0.0, 0, 0)
    if call_id is None:
        call_id = env.next_call_id()
    accepted, attempted = _sample_accepted_trees(V, x, i, env, cfg, call_id)
    if not accepted:
        return EstimateResult(None, None, 0, attempted)
    hits = sum(1 for labels in accepted if b in labels)
    p = hits / len(accepted)
    return EstimateResult(p, math.sqrt(max(p * (1 - p), 1 / len(accepted)) / len(accepted)),
                          len(accepted), attempted)


def estimate_consistency_ratio(V: KnownVertices, x: int, i: int,
                               env: EstimatorEnv, cfg: BottleneckConfig,
                               call_id: int | None = None) -> EstimateResult:
    """Fraction of consistent trees whose replay reproduces x; 0 hits -> inconclusive."""
    if i == 0:
        return EstimateResult(1.0, 0.0, 0, 0)
    if call_id is None:
        call_id = env.next_call_id()
    accepted, attempted = _sample_accepted_trees(V, x, i, env, cfg, call_id)
    if not accepted:
        return EstimateResult(None, None, 0, attempted)
    p = len(accepted) / attempted
    return EstimateResult(p, math.sqrt(p * (1 - p) / attempted), len(accepted), attempted)


# ---------------------------------------------------------------------------
# The Bottleneck subroutine
# ---------------------------------------------------------------------------

def _hist_graph(V_hist: KnownVertices) -> dict[int, dict[int, int]]:
    g: dict[int, dict[int, int]] = {}
    for (xx, c), y in V_hist.entries.items():
        if y != V_hist.invalid:
            g.setdefault(xx, {})[c] = y
    return g


def complete_subtree(V: KnownVertices, V_hist: KnownVertices) -> KnownVertices:
    """Minimum entrance-rooted subtree of V_hist containing V, as full rows.

    BFS parents in the recorded-answer graph give shortest paths from the
    entrance; the union of those paths over V's key vertices (plus the
    entrance itself) is closed into a dictionary by copying each chosen
    vertex's full answer row from V_hist.
    """
    graph = _hist_graph(V_hist)
    parent: dict[int, int | None] = {0: None}
    order = [0]
    qi = 0
    while qi < len(order):
        u = order[qi]
        qi += 1
        for c in sorted(graph.get(u, {})):
            w = graph[u][c]
            if w not in parent:
                parent[w] = u
                order.append(w)
    chosen = {0}
    for target in sorted(V.key_labels()):
        if target not in parent:
            raise AssertionError(f"label {target:#x} unreachable from the entrance "
                                 "in the recorded history")
        while target is not None and target not in chosen:
            chosen.add(target)
            target = parent[target]
    out = KnownVertices(V_hist.invalid)
    for v in sorted(chosen):
        row = V_hist.row(v)
        if row:
            for c, y in row.items():
                out.entries[(v, c)] = y
    # keep any extra entries the caller already held (subset of V_hist)
    merged = out.merge(KnownVertices(V.invalid, dict(V.entries)))
    return merged


def loop_ceiling(g: int, tape_len: int) -> int:
    return 2 * (g + tape_len)


def size_ceiling(v_current: int, n: int, g: int, tape_len: int) -> int:
    return v_current + 2 * n * (g + tape_len)


def bottleneck(i: int, x: int, V_current: KnownVertices, V_hist: KnownVertices,
               env: EstimatorEnv, cfg: BottleneckConfig,
               record: CallRecord | None = None) -> KnownVertices | Abort:
    """Rebuild the effectively-known dictionary; ABORT is a return value."""
    if not V_current.is_key_subset_of(V_hist):
        raise ValueError("V_current must be a key-subset of V_hist")
    n, g = env.n, env.circuit.g
    tape_len = len(env.tape)
    tau = cfg.resolved_tau(n)
    if record is None:
        record = CallRecord(tier=i, layer=-1, iterations=0, aborted=False,
                            v_current=V_current.size(), v_out=0,
                            v_hist=V_hist.size(), ratio=None)

    if tau <= 0.0:
        out = V_hist.copy()
        record.v_out = out.size()
        return out

    ratio = estimate_consistency_ratio(V_current, x, i, env, cfg)
    record.ratio = ratio.value
    record.ratio_stderr = ratio.stderr
    rho_log2 = cfg.resolved_rho_log2(n, g, tape_len)
    if ratio.conclusive and ratio.value > 0 and math.log2(ratio.value) < rho_log2:
        record.aborted = True
        return Abort("consistency ratio below floor")
    # an inconclusive or zero-hit estimate cannot certify smallness: no abort

    V = V_current.copy()
    ceiling = loop_ceiling(g, tape_len)
    iterations = 0
    rng = make_rng(env.seed, "fresh-candidates", env.next_call_id())

    def clears_tau(hits: int, m: int) -> bool:
        # Laplace-smoothed comparison: a finite sample cannot certify
        # p > tau when tau is this close to 1 unless the evidence is strong
        return (hits + 1) / (m + 2) > tau

    while True:
        call_id = env.next_call_id()
        accepted, _ = _sample_accepted_trees(V, x, i, env, cfg, call_id)
        violator = None
        if accepted:
            m = len(accepted)
            known = V.known_labels() | {0}
            for b in sorted(V_hist.known_labels() - known):
                hits = sum(1 for labels in accepted if b in labels)
                if clears_tau(hits, m):
                    violator = b
                    break
            if violator is None:
                inv = (1 << env.label_bits) - 1
                for _ in range(cfg.fresh_candidates):
                    b = int(rng.integers(0, 1 << env.label_bits))
                    if b == inv or b in known or b in V_hist.known_labels():
                        continue
                    hits = sum(1 for labels in accepted if b in labels)
                    if clears_tau(hits, m):
                        record.aborted = True
                        record.iterations = iterations
                        return Abort("guessable label outside the history")
        if violator is None:
            break
        iterations += 1
        if iterations > ceiling:
            raise AssertionError(f"bottleneck while-loop exceeded {ceiling} iterations")
        row = V_hist.row(violator)
        if row:
            for c, y in row.items():
                V.entries[(violator, c)] = y
        else:
            # known only as a neighbour: adopt the edge(s) pointing at it
            for (xx, c), y in V_hist.entries.items():
                if y == violator:
                    V.entries[(xx, c)] = y
    record.iterations = iterations

    out = complete_subtree(V, V_hist)
    if out.size() > size_ceiling(V_current.size(), n, g, tape_len):
        raise AssertionError("bottleneck output size ceiling exceeded")
    if not V_current.is_key_subset_of(out) or not out.is_key_subset_of(V_hist):
        raise AssertionError("bottleneck subset chain violated")
    record.v_out = out.size()
    return out


# ---------------------------------------------------------------------------
# Tier simulation and wrapper
# ---------------------------------------------------------------------------

def bottleneck_tier_sim(t: C.Tier, j: int, x: int, V_current: KnownVertices,
                        V_hist: KnownVertices, ctx: SimContext, env: EstimatorEnv,
                        cfg: BottleneckConfig, calls: list[CallRecord],
                        ) -> tuple[int, KnownVertices, KnownVertices] | Abort:
    """One quantum tier with per-layer merge and bottleneck (tier number j)."""
    if t.kind != "quantum":
        raise ValueError("bottleneck pipeline expects quantum tiers")
    empty = KnownVertices(V_hist.invalid)
    rec = CallRecord(tier=j, layer=-1, iterations=0, aborted=False,
                     v_current=0, v_out=0, v_hist=V_hist.size(), ratio=None)
    calls.append(rec)
    V0 = bottleneck(j - 1, x, empty, V_hist, env, cfg, record=rec)
    if isinstance(V0, Abort):
        return V0
    ctx.tier_index = j
    q_before = ctx.transcript.queries
    size_in = V0.size()
    state = SV.PureState.basis(t.width_in, x)
    V = V0
    for li, lay in enumerate(t.layers):
        state, V_temp = quantum_layer_sim(lay, state, V, ctx, layer_index=li)
        V_hist = V_hist.merge(V_temp)
        rec = CallRecord(tier=j, layer=li, iterations=0, aborted=False,
                         v_current=V_temp.size(), v_out=0, v_hist=V_hist.size(),
                         ratio=None)
        calls.append(rec)
        V_next = bottleneck(j - 1, x, V_temp, V_hist, env, cfg, record=rec)
        if isinstance(V_next, Abort):
            return V_next
        V = V_next
    V_hist = V_hist.merge(V)
    spent = ctx.transcript.queries - q_before
    if spent > (4 ** t.depth) * max(size_in, 1):
        raise AssertionError(f"tier spent {spent} queries, ceiling "
                             f"{(4 ** t.depth) * max(size_in, 1)}")
    ctx.transcript.per_tier_queries.append(spent)
    probs = state.marginal()
    total = sum(probs.values())
    if abs(total - 1.0) > 1e-12:
        probs = {k: p / total for k, p in probs.items()}
    x_out = SV.sample_outcome(probs, make_rng(env.tape.tier_seed(j), "sim-tier-measure"))
    return x_out, V, V_hist


def bottleneck_wrapper(circuit: C.HybridCircuit, bbt: BlackBoxTree,
                       tiers: int | None = None, seed: int = 0,
                       cfg: BottleneckConfig | None = None,
                       tape: SeedTape | None = None) -> BottleneckResult:
    """Iterative composition of bottlenecked tier simulations (all-quantum).

    On ABORT the result carries a uniformly random label as the exit guess.
    """
    C.require_valid(circuit)
    if not circuit.all_quantum:
        raise ValueError("bottleneck pipeline expects the all-quantum-tier variant")
    if tiers is None:
        tiers = circuit.eta
    cfg = cfg or BottleneckConfig()
    stats = C.accounting(circuit)
    if tape is None:
        tape = SeedTape.generate(seed, circuit.n, circuit.eta,
                                 max(stats.max_quantum_depth, 1), circuit.g)
    env = EstimatorEnv(circuit=circuit, tape=tape, n=circuit.n,
                       label_bits=bbt.label_bits, seed=seed,
                       structure=bbt.structure if cfg.mode == "labelings" else None,
                       coloring=bbt.coloring if cfg.mode == "labelings" else None)
    ctx = SimContext.fresh(bbt, instrument=cfg.instrument)
    calls: list[CallRecord] = []
    V = entrance_known(ctx)
    V_hist = V.copy()
    x = 0
    for j, t in enumerate(circuit.tiers[:tiers], start=1):
        x &= (1 << t.width_in) - 1
        step = bottleneck_tier_sim(t, j, x, V, V_hist, ctx, env, cfg, calls)
        if isinstance(step, Abort):
            guess_rng = make_rng(seed, "abort-guess")
            guess = int(guess_rng.integers(0, 1 << bbt.label_bits))
            ctx.transcript.aborted = True
            ctx.transcript.abort_reason = step.reason
            ctx.transcript.output = guess
            return BottleneckResult(output=guess, known=None, hist=V_hist,
                                    transcript=ctx.transcript, calls=calls,
                                    aborted=True, abort_reason=step.reason)
        x, V, V_hist = step
    ctx.transcript.output = x
    return BottleneckResult(output=x, known=V, hist=V_hist,
                            transcript=ctx.transcript, calls=calls, aborted=False)


def fidelity_gap_check(result: BottleneckResult) -> list[dict]:
    """Per-layer 1-norm gap between simulated and true-query layer outputs.

    Reported from the run's instrumentation: for outlier-free layers the gap
    is 0; otherwise it is bounded by twice the outlier amplitude mass (each
    outlier string contributes |c_z| at two basis positions at most).
    """
    report = []
    for rec in result.transcript.per_layer:
        report.append({"tier": rec.tier, "layer": rec.layer,
                       "outlier_mass": rec.outlier_mass,
                       "l1_gap": rec.l1_gap})
    return report

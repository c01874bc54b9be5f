"""Classical simulators for few-tier hybrid circuits and Jozsa circuits.

The simulator tracks a dictionary of known oracle answers and replaces every
query gate by a three-way substitution, per basis string of the current
sparse state:

  (a) the (x, c) key is already recorded -> substitute the stored answer;
  (b) x is a known-valid label (a key or non-INVALID value recorded at the
      start of the layer) but the key is new -> spend one real query to
      learn the whole vertex row (all nine colors) and substitute;
  (c) anything else -> substitute INVALID without querying.

Query accounting is per *vertex*: branch (b) and the entrance
initialization each cost one query on the transcript (the oracle handle
still counts all nine raw (x, c) invocations underneath).  Under this
accounting the growth and query ceilings are exact and asserted on every
call: a quantum layer at most quadruples the number of known vertices, a
depth-d quantum tier spends at most 4^d |V| queries, and a classical tier
at most width*depth.

The per-layer instrumentation records the outlier mass (squared amplitude
on basis strings where the substituted answers differ from the true
oracle's) and the simulated-vs-true layer fidelity, computed two ways: as
the branch-wise overlap sum_z |c_z|^2 <S(z)|L^T|z> and as 1 - outlier
mass.  The two agree exactly; the identity is asserted to 1e-10 in tests.

The substitution map S is evaluated lazily over the support of the current
state, never materialized over all basis strings; support-restricted
evaluation is pointwise identical on the states it is applied to.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import circuits as C
from . import statevec as SV
from .known import KnownVertices
from .rng import derive_seed, make_rng
from .tree import BlackBoxTree, OracleHandle


@dataclass
class LayerRecord:
    tier: int
    layer: int
    outlier_mass: float
    fidelity: float
    queries: int
    v_size: int
    l1_gap: float = 0.0        # || psi' - L^T phi ||_1 over amplitudes


@dataclass
class SimTranscript:
    """Query accounting and per-layer instrumentation for one simulation run."""

    queries: int = 0                  # vertex-level queries (the ceilings' unit)
    raw_queries: int = 0              # (x, c) oracle invocations underneath
    per_layer: list[LayerRecord] = field(default_factory=list)
    per_tier_queries: list[int] = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None
    output: int | None = None

    def to_json(self) -> str:
        doc = {
            "queries": self.queries,
            "raw_queries": self.raw_queries,
            "per_layer": [{"tier": r.tier, "layer": r.layer,
                           "outlier_mass": r.outlier_mass, "fidelity": r.fidelity,
                           "queries": r.queries, "v_size": r.v_size,
                           "l1_gap": r.l1_gap}
                          for r in self.per_layer],
            "per_tier_queries": self.per_tier_queries,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "output": self.output,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


@dataclass
class SimContext:
    bbt: BlackBoxTree
    handle: OracleHandle
    transcript: SimTranscript
    instrument: bool = True
    tier_index: int = 0

    @classmethod
    def fresh(cls, bbt: BlackBoxTree, instrument: bool = True) -> "SimContext":
        return cls(bbt=bbt, handle=bbt.handle(), transcript=SimTranscript(),
                   instrument=instrument)


def vertex_query(ctx: SimContext, V: KnownVertices, x: int) -> None:
    """Learn a whole vertex: ask all nine colors, count one query."""
    before = ctx.handle.count
    V.set_vertex(x, {c: ctx.handle.query(x, c) for c in range(1, 10)})
    ctx.transcript.queries += 1
    ctx.transcript.raw_queries += ctx.handle.count - before


def entrance_known(ctx: SimContext) -> KnownVertices:
    V = KnownVertices(ctx.bbt.invalid)
    vertex_query(ctx, V, 0)
    return V


def split_layer(lay: C.Layer) -> tuple[C.Layer, C.Layer]:
    """Disjoint (non-query, query-only) layers with L_T after L_G.

    The composition acts identically to the original layer on every basis
    state because depth-1 layers have wire-disjoint gates.
    """
    non_query = tuple(g for g in lay.gates if g.kind != C.GateKind.QUERY)
    queries = tuple(g for g in lay.gates if g.kind == C.GateKind.QUERY)
    lg = C.Layer(lay.width_in, lay.width_out, non_query)
    lt = C.Layer(lay.width_out, lay.width_out, queries)
    return lg, lt


def _registers_physical(gate: C.Gate, n: int, live: tuple[int, ...]):
    xw, cw, yw = C.query_registers(gate, n)
    return (tuple(live[w] for w in xw), tuple(live[w] for w in cw),
            tuple(live[w] for w in yw))


def _bits(key: int, phys: tuple[int, ...]) -> int:
    v = 0
    for j, w in enumerate(phys):
        v |= ((key >> w) & 1) << j
    return v


def simulate_oracle(V: KnownVertices, bbt: BlackBoxTree, lt: C.Layer,
                    support, live: tuple[int, ...], n: int,
                    ctx: SimContext) -> tuple[dict[int, int], KnownVertices]:
    """Alg-style query substitution over ``support``; returns (S, updated V).

    Branch (b) consults the set of labels known at layer start (frozen), so
    the updated dictionary gains at most 3|V| new key vertices.
    """
    for g in lt.gates:
        if g.kind != C.GateKind.QUERY:
            raise ValueError("simulate_oracle expects a query-only layer")
    invalid = bbt.invalid
    frozen = V.known_labels()
    work = V.copy()
    regs = [_registers_physical(g, n, live)
            for g in sorted(lt.gates, key=lambda g: g.wires[0])]
    S: dict[int, int] = {}
    for z in sorted(support):
        z_temp = z
        for (px, pc, py) in regs:
            x = _bits(z, px)
            cv = _bits(z, pc)
            if not (1 <= cv <= 9):
                ans = invalid          # no such color; truthful without a query
            elif work.has_key(x, cv):
                ans = work.get(x, cv)
            elif x in frozen and x != invalid:
                vertex_query(ctx, work, x)
                ans = work.get(x, cv)
            else:
                ans = invalid
            for j, w in enumerate(py):
                if (ans >> j) & 1:
                    z_temp ^= 1 << w
        S[z] = z_temp
    return S, work


def _true_layer_map(bbt: BlackBoxTree, lt: C.Layer, support, live, n) -> dict[int, int]:
    """The true oracle's action on the same support (instrumentation only)."""
    regs = [_registers_physical(g, n, live)
            for g in sorted(lt.gates, key=lambda g: g.wires[0])]
    out = {}
    for z in support:
        z_temp = z
        for (px, pc, py) in regs:
            ans = bbt.answer(_bits(z, px), _bits(z, pc))
            for j, w in enumerate(py):
                if (ans >> j) & 1:
                    z_temp ^= 1 << w
        out[z] = z_temp
    return out


def quantum_layer_sim(lay: C.Layer, state: SV.PureState, V: KnownVertices,
                      ctx: SimContext, layer_index: int = 0) -> tuple[SV.PureState, KnownVertices]:
    """One simulated quantum layer: exact non-query part, substituted queries."""
    bbt, n = ctx.bbt, ctx.bbt.n
    lg, lt = split_layer(lay)
    phi = SV.apply_layer(state, lg, bbt, n)
    size_before = V.size()
    q_before = ctx.transcript.queries
    support = sorted(phi.amps)
    S, V2 = simulate_oracle(V, bbt, lt, support, phi.live, n, ctx)
    psi_amps: dict[int, complex] = {}
    for z in support:
        k = S[z]
        psi_amps[k] = psi_amps.get(k, 0j) + phi.amps[z]
    psi = SV.PureState(width=phi.width, live=phi.live, amps=psi_amps)

    if V2.size() > 4 * max(size_before, 1):
        raise AssertionError(
            f"known-vertex growth {size_before} -> {V2.size()} exceeds 4x")

    if ctx.instrument:
        truth = _true_layer_map(bbt, lt, support, phi.live, n)
        outlier_mass = sum((phi.amps[z] * phi.amps[z].conjugate()).real
                           for z in support if S[z] != truth[z])
        # <psi'|L^T|phi> in the branch-diagonal form sum_z |c_z|^2 <S(z)|L^T|z>;
        # equal to 1 - outlier mass exactly (the global inner product gains
        # cross terms when S collides two basis strings, so it is not the
        # asserted quantity)
        fidelity = sum((phi.amps[z] * phi.amps[z].conjugate()).real
                       for z in support if S[z] == truth[z])
        true_amps: dict[int, complex] = {}
        for z in support:
            k = truth[z]
            true_amps[k] = true_amps.get(k, 0j) + phi.amps[z]
        l1_gap = sum(abs(psi_amps.get(k, 0j) - true_amps.get(k, 0j))
                     for k in set(psi_amps) | set(true_amps))
        ctx.transcript.per_layer.append(LayerRecord(
            tier=ctx.tier_index, layer=layer_index,
            outlier_mass=outlier_mass, fidelity=fidelity,
            queries=ctx.transcript.queries - q_before, v_size=V2.size(),
            l1_gap=l1_gap))
    return psi, V2


def quantum_tier_sim(t: C.Tier, x: int, V: KnownVertices, ctx: SimContext,
                     seed: int) -> tuple[int, KnownVertices]:
    """Simulated quantum tier: layer loop then a computational-basis sample."""
    probs, V2 = _quantum_tier_state(t, x, V, ctx)
    rng = make_rng(seed, "sim-tier-measure")
    return SV.sample_outcome(probs, rng), V2


def _quantum_tier_state(t: C.Tier, x: int, V: KnownVertices,
                        ctx: SimContext) -> tuple[dict[int, float], KnownVertices]:
    if t.kind != "quantum":
        raise ValueError("quantum tier expected")
    size_in = V.size()
    q_before = ctx.transcript.queries
    state = SV.PureState.basis(t.width_in, x)
    for li, lay in enumerate(t.layers):
        state, V = quantum_layer_sim(lay, state, V, ctx, layer_index=li)
    spent = ctx.transcript.queries - q_before
    if spent > (4 ** t.depth) * max(size_in, 1):
        raise AssertionError(f"tier spent {spent} queries, ceiling "
                             f"{(4 ** t.depth) * max(size_in, 1)}")
    ctx.transcript.per_tier_queries.append(spent)
    probs = state.marginal()
    total = sum(probs.values())
    # adversarial collisions can deform the simulated norm; renormalize only
    # then, so faithful circuits stay bit-identical to the executor
    if abs(total - 1.0) > 1e-12:
        probs = {k: p / total for k, p in probs.items()}
    return probs, V


def classical_tier_sim(t: C.Tier, x: int, V: KnownVertices,
                       ctx: SimContext) -> tuple[int, KnownVertices]:
    """Deterministic classical tier with the same query substitution rules."""
    if t.kind != "classical":
        raise ValueError("classical tier expected")
    bbt, n = ctx.bbt, ctx.bbt.n
    q_before = ctx.transcript.queries
    width = max((lay.working_width for lay in t.layers), default=t.width_in)
    out = x
    for lay in t.layers:
        lg, lt = split_layer(lay)
        out = SV.eval_classical_layer(out, lg, bbt, None, n)
        live = tuple(range(lay.width_out))
        S, V = simulate_oracle(V, bbt, lt, [out], live, n, ctx)
        out = S[out]
    spent = ctx.transcript.queries - q_before
    if spent > width * max(t.depth, 1):
        raise AssertionError(f"classical tier spent {spent} queries, ceiling "
                             f"{width * max(t.depth, 1)}")
    ctx.transcript.per_tier_queries.append(spent)
    return out, V


@dataclass
class SimResult:
    output: int
    known: KnownVertices
    transcript: SimTranscript


def wrapper_query_ceiling(circuit: C.Circuit) -> int:
    """4^(eta(d+1)) * g * d with d the max quantum depth, g*d the classical part."""
    stats = C.accounting(circuit)
    dq = max(stats.max_quantum_depth, 1)
    dc = max(stats.max_classical_depth, 1)
    return (4 ** (stats.eta * (dq + 1))) * stats.g * dc


def few_tier_wrapper(circuit: C.HybridCircuit, bbt: BlackBoxTree,
                     tiers: int | None = None, seed: int = 0,
                     instrument: bool = True,
                     tier_seed_fn=None) -> SimResult:
    """Compose per-tier simulations for the first ``tiers`` tiers.

    tiers=0 returns the initialization alone: x = all-zeros input and the
    entrance's answer row.  ``tier_seed_fn(i)`` overrides the per-tier
    measurement seed (the bottleneck equivalence tests share a seed tape).
    """
    C.require_valid(circuit)
    if tiers is None:
        tiers = circuit.eta
    if not 0 <= tiers <= circuit.eta:
        raise ValueError("tier count out of range")
    if tier_seed_fn is None:
        tier_seed_fn = lambda i: derive_seed(seed, "tier", i)
    ctx = SimContext.fresh(bbt, instrument=instrument)
    V = entrance_known(ctx)
    x = 0
    for i, t in enumerate(circuit.tiers[:tiers], start=1):
        ctx.tier_index = i
        x &= (1 << t.width_in) - 1
        if t.kind == "classical":
            x, V = classical_tier_sim(t, x, V, ctx)
        else:
            x, V = quantum_tier_sim(t, x, V, ctx, tier_seed_fn(i))
    if ctx.transcript.queries > wrapper_query_ceiling(circuit):
        raise AssertionError("wrapper query ceiling exceeded")
    ctx.transcript.output = x
    return SimResult(output=x, known=V, transcript=ctx.transcript)


def few_tier_exact_distribution(circuit: C.HybridCircuit, bbt: BlackBoxTree,
                                tiers: int | None = None) -> SV.OutputDistribution:
    """Exact output distribution of the simulator (measurement branches enumerated)."""
    C.require_valid(circuit)
    if tiers is None:
        tiers = circuit.eta
    acc: dict[int, float] = {}

    def rec(i: int, x: int, V: KnownVertices, weight: float, ctx: SimContext):
        if i == tiers:
            acc[x] = acc.get(x, 0.0) + weight
            return
        t = circuit.tiers[i]
        ctx.tier_index = i + 1
        x &= (1 << t.width_in) - 1
        if t.kind == "classical":
            y, V2 = classical_tier_sim(t, x, V, ctx)
            rec(i + 1, y, V2, weight, ctx)
        else:
            probs, V2 = _quantum_tier_state(t, x, V, ctx)
            for y, p in sorted(probs.items()):
                if p <= 0:
                    continue
                rec(i + 1, y, V2.copy(), weight * p, ctx)

    ctx0 = SimContext.fresh(bbt, instrument=False)
    V0 = entrance_known(ctx0)
    rec(0, 0, V0, 1.0, ctx0)
    width = circuit.tiers[tiers - 1].width_out if tiers else circuit.n
    out = SV.OutputDistribution(width=width, probs=acc)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Jozsa path
# ---------------------------------------------------------------------------

def jozsa_tier_sim(circuit: C.JozsaCircuit, state: SV.PureState, V: KnownVertices,
                   ctx: SimContext, seed: int) -> tuple[int, KnownVertices]:
    """Alternate simulated quantum layers with measure-R1-then-classical blocks."""
    half = circuit.r1_width
    for i, (qt, ct) in enumerate(zip(circuit.quantum_tiers, circuit.classical_tiers),
                                 start=1):
        ctx.tier_index = i
        for li, lay in enumerate(qt.layers):
            state, V = quantum_layer_sim(lay, state, V, ctx, layer_index=li)
        rng = make_rng(seed, "sim-r1", i)
        r1 = SV.sample_outcome(SV._r1_marginal(state, half), rng)
        state = SV._collapse_r1(state, r1, half)
        x, V = classical_tier_sim(ct, r1, V, ctx)
        state = SV._set_r1(state, x, half)
    rng = make_rng(seed, "sim-final")
    out = SV.sample_outcome(state.marginal(), rng)
    return out, V


def jozsa_wrapper(circuit: C.JozsaCircuit, bbt: BlackBoxTree, seed: int = 0,
                  instrument: bool = True) -> SimResult:
    C.require_valid(circuit)
    ctx = SimContext.fresh(bbt, instrument=instrument)
    V = entrance_known(ctx)
    state = SV.PureState.basis(circuit.n, 0)
    x, V = jozsa_tier_sim(circuit, state, V, ctx, seed)
    ctx.transcript.output = x
    return SimResult(output=x, known=V, transcript=ctx.transcript)


def jozsa_exact_distribution(circuit: C.JozsaCircuit,
                             bbt: BlackBoxTree) -> SV.OutputDistribution:
    C.require_valid(circuit)
    half = circuit.r1_width
    acc: dict[int, float] = {}

    def rec(state: SV.PureState, i: int, V: KnownVertices, weight: float,
            ctx: SimContext):
        if i == circuit.eta:
            probs = state.marginal()
            total = sum(probs.values())
            scale = total if abs(total - 1.0) > 1e-12 else 1.0
            for z, p in probs.items():
                acc[z] = acc.get(z, 0.0) + weight * p / scale
            return
        qt, ct = circuit.quantum_tiers[i], circuit.classical_tiers[i]
        ctx.tier_index = i + 1
        for li, lay in enumerate(qt.layers):
            state, V = quantum_layer_sim(lay, state, V, ctx, layer_index=li)
        r1_probs = SV._r1_marginal(state, half)
        total = sum(r1_probs.values())
        scale = total if abs(total - 1.0) > 1e-12 else 1.0
        for r1, p in sorted(r1_probs.items()):
            if p <= 0:
                continue
            branch = SV._collapse_r1(state, r1, half)
            ctx2 = SimContext.fresh(ctx.bbt, instrument=False)
            ctx2.transcript = ctx.transcript
            x, V2 = classical_tier_sim(ct, r1, V.copy(), ctx2)
            rec(SV._set_r1(branch, x, half), i + 1, V2, weight * p / scale, ctx)

    ctx0 = SimContext.fresh(bbt, instrument=False)
    V0 = entrance_known(ctx0)
    rec(SV.PureState.basis(circuit.n, 0), 0, V0, 1.0, ctx0)
    out = SV.OutputDistribution(width=circuit.g, probs=acc)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Reference comparison
# ---------------------------------------------------------------------------

@dataclass
class CompareReport:
    labelings: int
    mean_tv: float
    stderr_tv: float
    max_tv: float
    mean_queries: float
    max_fidelity_gap: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))


def compare_to_reference(circuit: C.Circuit, structure, labelings: int, seed: int,
                         label_bits: int | None = None) -> CompareReport:
    """Per-labeling TV between simulator and exact executor distributions."""
    from .tree import generate_coloring, generate_labels

    C.require_valid(circuit)
    coloring = generate_coloring(structure, derive_seed(seed, "coloring-pick"))
    tvs: list[float] = []
    queries: list[int] = []
    fgap = 0.0
    for t_idx in range(labelings):
        bbt = generate_labels(structure, coloring, derive_seed(seed, "labeling", t_idx),
                              label_bits=label_bits)
        if isinstance(circuit, C.HybridCircuit):
            ref = SV.run_hybrid_exact(circuit, bbt)
            sim = few_tier_exact_distribution(circuit, bbt)
        else:
            ref = SV.run_jozsa_exact(circuit, bbt)
            sim = jozsa_exact_distribution(circuit, bbt)
        tvs.append(SV.tv_distance(ref.probs, sim.probs))
        run = (few_tier_wrapper(circuit, bbt, seed=derive_seed(seed, "run", t_idx))
               if isinstance(circuit, C.HybridCircuit)
               else jozsa_wrapper(circuit, bbt, seed=derive_seed(seed, "run", t_idx)))
        queries.append(run.transcript.queries)
        for rec in run.transcript.per_layer:
            fgap = max(fgap, abs(rec.fidelity - (1.0 - rec.outlier_mass)))
    mean = sum(tvs) / len(tvs)
    var = sum((t - mean) ** 2 for t in tvs) / max(len(tvs) - 1, 1)
    return CompareReport(labelings=labelings, mean_tv=mean,
                         stderr_tv=(var / len(tvs)) ** 0.5, max_tv=max(tvs),
                         mean_queries=sum(queries) / len(queries),
                         max_fidelity_gap=fgap)

from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from weldlab import bottleneck as BN
from weldlab import circuits as C
from weldlab import hybrid_sim as HS
from weldlab import tree
from weldlab.known import KnownVertices

from circuit_gen import random_hybrid


def _allq(rng, n=2, g=12, eta=2, max_q=2, p_query=0.6):
    return random_hybrid(rng, n=n, g=g, eta=eta, max_c=1, max_q=max_q,
                         p_query=p_query, all_quantum=True)


def _tape_for(circ, seed):
    stats = C.accounting(circ)
    return BN.SeedTape.generate(seed, circ.n, circ.eta,
                                max(stats.max_quantum_depth, 1), circ.g)


# ---------------------------------------------------------------------------
# seed tape
# ---------------------------------------------------------------------------

def test_tape_prefix_determinism():
    rng = np.random.default_rng(0)
    circ = _allq(rng, eta=3)
    bbt = tree.make_blackbox(2, 5)
    tape = _tape_for(circ, 9)
    scrambled = tape.with_suffix_scrambled(2, master=12345)
    assert np.array_equal(tape.prefix(2), scrambled.prefix(2))
    assert not np.array_equal(tape.bits, scrambled.bits)
    cfg = BN.BottleneckConfig(tau=0.0)
    a = BN.bottleneck_wrapper(circ, bbt, tiers=2, seed=9, cfg=cfg, tape=tape)
    b = BN.bottleneck_wrapper(circ, bbt, tiers=2, seed=9, cfg=cfg, tape=scrambled)
    assert a.output == b.output
    assert a.known.entries == b.known.entries
    assert a.transcript.to_json() == b.transcript.to_json()


def test_tape_tier_seed_reads_segment_only():
    tape = BN.SeedTape.generate(1, 2, 3, 2, 8)
    scr = tape.with_suffix_scrambled(1, master=7)
    assert tape.tier_seed(1) == scr.tier_seed(1)
    assert tape.tier_seed(2) != scr.tier_seed(2)


# ---------------------------------------------------------------------------
# bottleneck invariants
# ---------------------------------------------------------------------------

def _check_subtree(V: KnownVertices):
    """Keys must form an entrance-rooted connected set through recorded edges."""
    graph = {}
    for (x, c), y in V.entries.items():
        if y != V.invalid:
            graph.setdefault(x, set()).add(y)
            graph.setdefault(y, set()).add(x)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for w in graph.get(u, ()):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    assert V.key_labels() <= seen


def test_bottleneck_runs_and_invariants():
    rng = np.random.default_rng(1)
    for trial in range(15):
        circ = _allq(rng, eta=int(rng.integers(1, 4)))
        bbt = tree.make_blackbox(2, 50 + trial)
        tape = _tape_for(circ, trial)
        res = BN.bottleneck_wrapper(circ, bbt, seed=trial, tape=tape)
        tape_len = len(tape)
        for call in res.calls:
            assert call.iterations <= BN.loop_ceiling(circ.g, tape_len)
            if not call.aborted:
                assert call.v_out <= BN.size_ceiling(call.v_current, circ.n,
                                                     circ.g, tape_len)
        if not res.aborted:
            assert res.known.is_key_subset_of(res.hist)
            _check_subtree(res.known)
            for (x, c), y in res.hist.entries.items():
                assert bbt.answer(x, c) == y


def test_tau_zero_degeneration_transcript_identical():
    rng = np.random.default_rng(2)
    for trial in range(8):
        circ = _allq(rng, eta=int(rng.integers(1, 4)), max_q=2)
        bbt = tree.make_blackbox(2, 80 + trial)
        tape = _tape_for(circ, trial)
        b = BN.bottleneck_wrapper(circ, bbt, seed=trial,
                                  cfg=BN.BottleneckConfig(tau=0.0), tape=tape)
        f = HS.few_tier_wrapper(circ, bbt, seed=trial, tier_seed_fn=tape.tier_seed)
        assert b.output == f.output
        assert b.transcript.to_json() == f.transcript.to_json()
        assert b.known.entries == f.known.entries


def test_abort_guess_path_tiny_tau():
    rng = np.random.default_rng(3)
    circ = _allq(rng, eta=2, p_query=0.7)
    bbt = tree.make_blackbox(2, 7)
    cfg = BN.BottleneckConfig(tau=1e-12, sample_budget=10, fresh_candidates=8)
    res = BN.bottleneck_wrapper(circ, bbt, seed=4, cfg=cfg, tape=_tape_for(circ, 4))
    assert res.aborted
    assert res.abort_reason == "guessable label outside the history"
    assert 0 <= res.output < (1 << bbt.label_bits)


def test_abort_ratio_path_tight_rho():
    # querying a superposed x-register makes the tier transcript depend on
    # the tree's labels; conditioning on a minority transcript with a rho
    # floor near 1 fires the ratio abort
    from circuit_gen import _x_layers

    n, g = 2, 12
    grow = C.Layer(n, g, tuple(C.Gate(C.GateKind.ANCILLA, (w,)) for w in range(n, g)))
    layers = [grow] + _x_layers(g, [4]) + [
        C.layer(g, [C.Gate(C.GateKind.H, (w,)) for w in range(4)]),
        C.layer(g, [C.query_gate(n)])]
    t1 = C.Tier("quantum", tuple(layers), n, g)
    circ = C.HybridCircuit(n=n, g=g, tiers=(t1,), all_quantum=True)
    C.require_valid(circ)
    bbt = tree.make_blackbox(2, 9)
    stats = C.accounting(circ)
    tape = BN.SeedTape.generate(0, 2, 1, stats.max_quantum_depth, g)
    env = BN.EstimatorEnv(circuit=circ, tape=tape, n=2, label_bits=bbt.label_bits,
                          seed=6, structure=bbt.structure, coloring=bbt.coloring)
    empty = KnownVertices(bbt.invalid)
    # find a transcript that only a minority of consistent trees reproduce
    outcomes = [BN.replay_prefix(circ, tree.sample_consistent(
        empty, 2, s, mode="labelings", structure=bbt.structure,
        coloring=bbt.coloring), 1, tape) for s in range(60)]
    counts = {x: outcomes.count(x) for x in set(outcomes)}
    x_minor = min(counts, key=lambda x: counts[x])
    assert counts[x_minor] / 60 < 0.5
    cfg = BN.BottleneckConfig(rho_log2=-0.2, sample_budget=80, fresh_candidates=0)
    out = BN.bottleneck(1, x_minor, empty, empty, env, cfg)
    assert isinstance(out, BN.Abort)
    assert out.reason == "consistency ratio below floor"


def test_merge_idempotent_order_insensitive():
    inv = tree.invalid_label(4)
    a = KnownVertices(inv, {(0, 1): 3, (0, 2): inv})
    b = KnownVertices(inv, {(3, 5): 7, (0, 1): 3})
    ab = a.merge(b)
    ba = b.merge(a)
    assert ab.entries == ba.entries
    assert ab.merge(ab).entries == ab.entries
    bad = KnownVertices(inv, {(0, 1): 9})
    with pytest.raises(ValueError):
        a.merge(bad)


def test_complete_subtree_minimal_on_paths(bbt2):
    # history = a path of rows; asking for the far end must include the path
    h = bbt2.handle()
    hist = KnownVertices(bbt2.invalid)
    cur, chain = 0, [0]
    hist.set_vertex(0, {c: h.query(0, c) for c in range(1, 10)})
    for _ in range(3):
        nxt = sorted(hist.neighbors_of(cur).items())[0][1]
        hist.set_vertex(nxt, {c: h.query(nxt, c) for c in range(1, 10)})
        chain.append(nxt)
        cur = nxt
    want = KnownVertices(bbt2.invalid)
    want.set_vertex(chain[-1], bbt2.vertex_row(chain[-1]))
    out = BN.complete_subtree(want, hist)
    assert set(chain) <= out.key_labels()


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------

def _env_for(circ, bbt, seed):
    return BN.EstimatorEnv(circuit=circ, tape=_tape_for(circ, seed), n=circ.n,
                           label_bits=bbt.label_bits, seed=seed,
                           structure=bbt.structure, coloring=bbt.coloring)


def test_estimator_short_circuits(bbt2):
    rng = np.random.default_rng(5)
    circ = _allq(rng)
    env = _env_for(circ, bbt2, 3)
    cfg = BN.BottleneckConfig()
    ctx = HS.SimContext.fresh(bbt2)
    V = HS.entrance_known(ctx)
    known = sorted(V.known_labels())[1]
    est = BN.estimate_membership_probability(V, 0, 0, known, env, cfg)
    assert est.value == 1.0 and est.attempted == 0
    est = BN.estimate_membership_probability(V, 0, 0, bbt2.invalid, env, cfg)
    assert est.value == 0.0
    est = BN.estimate_consistency_ratio(V, 0, 0, env, cfg)
    assert est.value == 1.0


def test_estimators_match_enumeration(bbt2):
    # exhaustive oracle over all labelings consistent with a half-known tree
    rng = np.random.default_rng(6)
    circ = _allq(rng, p_query=0.7)
    env = _env_for(circ, bbt2, 11)
    h = bbt2.handle()
    V = KnownVertices(bbt2.invalid)
    V.set_vertex(0, {c: h.query(0, c) for c in range(1, 10)})
    frontier = sorted(V.known_labels() - V.key_labels())
    for lab in frontier[:2]:
        V.set_vertex(lab, bbt2.vertex_row(lab))
    for lab in sorted(V.known_labels() - V.key_labels())[:3]:
        V.set_vertex(lab, bbt2.vertex_row(lab))
    x = BN.replay_prefix(circ, bbt2, 1, env.tape)

    pos = tree.embed_entries(V, bbt2.structure, bbt2.coloring, bbt2.label_bits)
    free_vs = [v for v in range(bbt2.structure.vertex_count) if v not in pos.values()]
    avail = sorted(set(range(1, 15)) - V.known_labels())
    count = math.perm(len(avail), len(free_vs))
    assert 0 < count <= 5000
    accepted = 0
    valid_counts: dict[int, int] = {}
    for combo in itertools.permutations(avail, len(free_vs)):
        labels = np.empty(bbt2.structure.vertex_count, dtype=np.int64)
        for lab, v in pos.items():
            labels[v] = lab
        for v, lab in zip(free_vs, combo):
            labels[v] = lab
        P = tree.BlackBoxTree(structure=bbt2.structure, coloring=bbt2.coloring,
                              labels=labels, label_bits=bbt2.label_bits)
        if BN.replay_prefix(circ, P, 1, env.tape) == x:
            accepted += 1
            for lab in combo:
                valid_counts[lab] = valid_counts.get(lab, 0) + 1
    assert accepted > 0

    cfg = BN.BottleneckConfig(sample_budget=300)
    for b in avail[:2]:
        exact = valid_counts.get(b, 0) / accepted
        est = BN.estimate_membership_probability(V, x, 1, b, env, cfg)
        assert est.conclusive
        assert abs(est.value - exact) <= 3 * max(est.stderr, 0.01)

    est = BN.estimate_consistency_ratio(V, x, 1, env, cfg)
    exact_ratio = accepted / count
    assert abs(est.value - exact_ratio) <= 3 * max(est.stderr, 0.01)


def test_estimator_inconclusive_on_impossible_transcript(bbt2):
    rng = np.random.default_rng(8)
    circ = _allq(rng, p_query=0.0)
    env = _env_for(circ, bbt2, 13)
    ctx = HS.SimContext.fresh(bbt2)
    V = HS.entrance_known(ctx)
    # a query-free deterministic circuit reproduces exactly one transcript;
    # its ratio is 1, and conditioning on any other accepts no samples
    good = BN.replay_prefix(circ, bbt2, 1, env.tape)
    cfg = BN.BottleneckConfig(sample_budget=8)
    est = BN.estimate_consistency_ratio(V, good, 1, env, cfg)
    assert est.value == 1.0
    est = BN.estimate_consistency_ratio(V, good ^ 1, 1, env, cfg)
    assert not est.conclusive and est.accepted == 0


def test_bottleneck_keeps_entrance_dictionary_on_query_free_circuit(bbt2):
    rng = np.random.default_rng(15)
    circ = _allq(rng, p_query=0.0)
    env = _env_for(circ, bbt2, 19)
    ctx = HS.SimContext.fresh(bbt2)
    V = HS.entrance_known(ctx)
    out = BN.bottleneck(0, 0, V.copy(), V.copy(), env, BN.BottleneckConfig())
    assert not isinstance(out, BN.Abort)
    assert out.entries == V.entries


def test_wrapper_base_case_tiers_zero(bbt2):
    rng = np.random.default_rng(16)
    circ = _allq(rng, eta=2)
    res = BN.bottleneck_wrapper(circ, bbt2, tiers=0, seed=1,
                                tape=_tape_for(circ, 1))
    assert res.output == 0 and not res.aborted
    assert res.known.key_labels() == {0}
    assert res.known.entries == res.hist.entries


def test_fidelity_gap_positive_and_bounded_on_outliers():
    # a tier querying a superposed x-register produces outliers; the gap is
    # positive and bounded by twice the outlier amplitude mass
    n, g = 2, 12
    grow = C.Layer(n, g, tuple(C.Gate(C.GateKind.ANCILLA, (w,)) for w in range(n, g)))
    h_layer = C.layer(g, [C.Gate(C.GateKind.H, (w,)) for w in range(4)])
    from circuit_gen import _x_layers
    layers = [grow] + _x_layers(g, [4]) + [h_layer, C.layer(g, [C.query_gate(n)])]
    circ = C.HybridCircuit(n=n, g=g, tiers=(C.Tier("quantum", tuple(layers), n, g),),
                           all_quantum=True)
    bbt = tree.make_blackbox(2, 44)
    res = BN.bottleneck_wrapper(circ, bbt, seed=2, tape=_tape_for(circ, 2))
    rep = BN.fidelity_gap_check(res)
    gaps = [r for r in rep if r["outlier_mass"] > 0]
    assert gaps, "expected at least one outlier layer"
    for r in gaps:
        assert 0 < r["l1_gap"] <= 2 * (r["outlier_mass"] * 16) ** 0.5 + 1e-9


def test_fidelity_gap_report():
    rng = np.random.default_rng(9)
    circ = _allq(rng, p_query=0.0)
    bbt = tree.make_blackbox(2, 3)
    res = BN.bottleneck_wrapper(circ, bbt, seed=1, tape=_tape_for(circ, 1))
    rep = BN.fidelity_gap_check(res)
    assert all(r["l1_gap"] == 0.0 for r in rep)  # query-free: no outliers


def test_bottleneck_report_json():
    import json

    rng = np.random.default_rng(10)
    circ = _allq(rng, eta=2)
    bbt = tree.make_blackbox(2, 6)
    res = BN.bottleneck_wrapper(circ, bbt, seed=2, tape=_tape_for(circ, 2))
    doc = json.loads(res.report_json())
    assert {"aborted", "calls", "output", "v_hist", "v_known"} <= set(doc)
    call = doc["calls"][0]
    assert {"tier", "layer", "loop_iterations", "aborted", "v_current",
            "v_out", "v_hist", "ratio", "ratio_stderr"} <= set(call)
    assert res.report_json() == res.report_json()

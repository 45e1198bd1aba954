import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from brwends.branching import (OffspringLaw, PopulationCapExceeded, classify_regime,
                               extract_trace, make_trace, occupancy_verdict,
                               run_tree_indexed_walk, sample_gw_tree, sample_tree,
                               sample_ugw_tree, visit_profile)
from brwends.walk import n_step_distribution


def test_law_validation():
    with pytest.raises(ValueError):
        OffspringLaw({1: 0.5, 2: 0.6})
    with pytest.raises(ValueError, match="mu_0"):
        OffspringLaw({0: 0.1, 2: 0.9}).check_supercritical()
    with pytest.raises(ValueError, match="mu_1"):
        OffspringLaw({2: 1.0}).check_supercritical()
    with pytest.raises(ValueError, match="supercritical"):
        OffspringLaw({1: 1.0}).check_supercritical()
    law = OffspringLaw({1: 0.643, 2: 0.357}).check_supercritical()
    assert law.mean == pytest.approx(1.357)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.001, 4.5))
def test_with_mean(m):
    law = OffspringLaw.with_mean(m)
    assert law.mean == pytest.approx(m, rel=1e-12)
    law.check_supercritical()


def test_with_mean_infeasible():
    with pytest.raises(ValueError):
        OffspringLaw.with_mean(1.0)


def test_delta_one_path(rng):
    t = sample_gw_tree(OffspringLaw({1: 1.0}), 5, rng)
    assert t.n == 6 and t.parent.tolist() == [-1, 0, 1, 2, 3, 4]


def test_delta_two_sizes(rng):
    t = sample_gw_tree(OffspringLaw({2: 1.0}), 7, rng)
    assert t.generation_sizes().tolist() == [2 ** n for n in range(8)]


def test_tree_invariants(rng):
    t = sample_ugw_tree(OffspringLaw({1: 0.3, 2: 0.4, 3: 0.3}), 8, rng)
    assert t.parent[0] == -1 and t.generation[0] == 0
    assert np.all(t.generation[1:] == t.generation[t.parent[1:]] + 1)
    assert np.all(t.parent[1:] < np.arange(1, t.n))     # acyclic, connected


def test_population_mean(rng):
    law = OffspringLaw({1: 0.5, 2: 0.5})
    sizes = np.array([sample_gw_tree(law, 10, rng).generation_sizes()[-1]
                      for _ in range(10_000)])
    se = sizes.std(ddof=1) / math.sqrt(len(sizes))
    assert abs(sizes.mean() - 1.5 ** 10) <= 3 * se


def test_population_cap(rng):
    with pytest.raises(PopulationCapExceeded) as e:
        sample_gw_tree(OffspringLaw({2: 1.0}), 20, rng, cap=1000)
    assert e.value.generation == 9


def test_ugw_delta_one_root(rng):
    for _ in range(20):
        t = sample_ugw_tree(OffspringLaw({1: 1.0}), 3, rng)
        assert t.child_counts()[0] == 2


def test_ugw_root_law():
    root = OffspringLaw({1: 0.5, 2: 0.5}).ugw_root_law()
    assert root[2] == pytest.approx(3 / 5) and root[3] == pytest.approx(2 / 5)


def test_ugw_root_frequencies(rng):
    law = OffspringLaw({1: 0.5, 2: 0.5})
    roots = [sample_ugw_tree(law, 1, rng).child_counts()[0] for _ in range(10_000)]
    obs = [roots.count(2), roots.count(3)]
    assert chisquare(obs, [6000, 4000]).pvalue > 0.01


def test_non_root_offspring_law(rng):
    law = OffspringLaw({1: 0.3, 2: 0.4, 3: 0.3})
    counts = []
    while len(counts) < 10_000:
        t = sample_ugw_tree(law, 3, rng)
        cc = t.child_counts()
        counts.extend(cc[1:t.gen_offsets[3]].tolist())   # non-root vertices that branched
    counts = np.array(counts[:10_000])
    obs = [(counts == k).sum() for k in (1, 2, 3)]
    assert chisquare(obs, [3000, 4000, 3000]).pvalue > 0.01


def test_ugw_subtrees_are_gw(rng):
    # given the root degree, each child subtree is GW: compare generation-2 sizes
    law = OffspringLaw({1: 0.5, 2: 0.5})
    sub, ref = [], []
    for _ in range(4000):
        t = sample_ugw_tree(law, 3, rng)
        kids = np.nonzero(t.parent == 0)[0]
        gc = t.child_counts()
        first = kids[0]
        grand = np.nonzero(t.parent == first)[0]
        sub.append(1 + len(grand) + gc[grand].sum())
        g = sample_gw_tree(law, 2, rng).generation_sizes()
        ref.append(g.sum())
    sub, ref = np.array(sub), np.array(ref)
    se = math.sqrt(sub.var(ddof=1) / len(sub) + ref.var(ddof=1) / len(ref))
    assert abs(sub.mean() - ref.mean()) <= 3 * se


def test_walk_root_and_recurrence(surface_group, surface_q, rng):
    law = OffspringLaw({1: 0.5, 2: 0.5})
    t = sample_tree(law, 6, rng)
    start = surface_group.state_of("abc")
    run = run_tree_indexed_walk(t, surface_q, start, rng, surface_group)
    assert run.states[0] == start
    k = surface_group.rank
    for v in range(1, t.n):
        lab = int(run.labels[v])
        parent = run.states[t.parent[v]]
        expect = parent if lab == k else surface_group.step(parent, lab)
        assert run.states[v] == expect


def test_depth_one_positions(free_group, free, rng):
    from brwends.walk import uniform_measure

    q = uniform_measure(free)
    law = OffspringLaw({1: 1.0})
    start = free_group.state_of("ab")
    obs = {}
    for _ in range(10_000):
        run = run_tree_indexed_walk(sample_gw_tree(law, 1, rng), q, start, rng, free_group)
        w = free.spell(free_group.normal_form(run.states[1]))
        obs[w] = obs.get(w, 0) + 1
    keys = sorted(obs)
    assert set(keys) == {"ab", "aba", "abb", "abA", "a"}
    assert chisquare([obs[k] for k in keys], [2000] * 5).pvalue > 0.01


def test_generation_marginal_matches_dp(surface_ball5, surface_group, surface_q, rng):
    law = OffspringLaw({1: 1.0})
    n = 3
    exact = n_step_distribution(surface_ball5, 0, n, surface_q).mass
    counts = np.zeros(surface_ball5.n)
    runs = 10_000
    for _ in range(runs):
        run = run_tree_indexed_walk(sample_gw_tree(law, n, rng), surface_q,
                                    surface_group.identity, rng, surface_group)
        counts[surface_ball5.walk(0, surface_group.geodesic_word(run.states[-1]))] += 1
    tv = 0.5 * np.abs(counts / runs - exact).sum()
    assert tv <= 0.02 + 0.5 * math.sqrt(np.count_nonzero(exact) / runs)


def test_trace_of_single_path(free_group, free, rng):
    from brwends.walk import uniform_measure

    q = uniform_measure(free)
    t = sample_gw_tree(OffspringLaw({1: 1.0}), 30, rng)
    run = run_tree_indexed_walk(t, q, free_group.identity, rng, free_group)
    tr = extract_trace(run)
    assert set(tr.states) == set(run.states)
    assert tr.multiplicity.sum() == t.n
    moves = {tuple(sorted((tr.index[run.states[t.parent[v]]], tr.index[run.states[v]])))
             for v in range(1, t.n) if run.labels[v] != free_group.rank}
    assert len(tr.edges) == len(moves)
    assert tr.start == tr.index[free_group.identity]


def test_trace_invariants(surface_group, surface_q, rng):
    from scipy.sparse.csgraph import connected_components

    law = OffspringLaw({1: 0.6, 2: 0.4})
    for _ in range(10):
        run = run_tree_indexed_walk(sample_ugw_tree(law, 10, rng), surface_q,
                                    surface_group.identity, rng, surface_group)
        tr = extract_trace(run)
        assert connected_components(tr.adjacency(), directed=False)[0] == 1
        assert tr.states[tr.start] == surface_group.identity
        for (i, j), t in zip(tr.edges.tolist(), tr.edge_labels.tolist()):
            assert surface_group.step(tr.states[i], t) == tr.states[j]


def test_lazy_edges_add_multiplicity_only(free_group):
    e = free_group.identity
    a = free_group.step(e, 0)
    tr = make_trace(free_group, [e, e, a], [(e, 0, a)], multiplicity=[2, 1])
    assert tr.n == 2 and len(tr.edges) == 1


def test_classify_examples():
    assert classify_regime(1.1, 0.86603).regime == "transient"
    crit = classify_regime(1 / 0.8, 0.8, margin=0.01)
    assert crit.regime == "transient" and crit.critical
    assert classify_regime(1.3, 0.86603).regime == "recurrent"
    with pytest.raises(ValueError):
        classify_regime(1.0, 0.8)
    with pytest.raises(ValueError):
        classify_regime(1.2, 1.0)


def test_empty_target(free_group, free, rng):
    from brwends.walk import uniform_measure

    q = uniform_measure(free)
    runs = [run_tree_indexed_walk(sample_gw_tree(OffspringLaw({1: .5, 2: .5}), 5, rng), q,
                                  free_group.identity, rng, free_group) for _ in range(5)]
    table = visit_profile(runs, set())
    assert table.counts.sum() == 0
    assert (table.last_visit() == -1).all()
    assert (occupancy_verdict(table, 3) == "transient").all()

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwends.branching import OffspringLaw, make_trace
from brwends.mtp import (FUNCTIONALS, exact_sides, mtp_test, paired_verdict,
                         prop31_transport, sample_sides, trifurcation_points)

LAW = OffspringLaw({1: 0.5, 2: 0.5})


def test_edge_functional_sides_identical(rng):
    rep = mtp_test(LAW, "edge", 2, 2000, rng)
    assert rep.left == rep.right and rep.passed


def test_inv_degree_exact_ugw():
    left, right = exact_sides(LAW, "inv_degree")
    assert left == pytest.approx(1.0) and right == pytest.approx(1.0)


def test_inv_degree_exact_gw_is_biased():
    left, right = exact_sides(LAW, "inv_degree", flavor="GW")
    assert left == pytest.approx(1.0) and right != pytest.approx(1.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 1.0), min_size=1, max_size=4))
def test_unimodular_sides_agree_exactly(ws):
    probs = np.array(ws) / sum(ws)
    law = OffspringLaw({k + 1: p for k, p in enumerate(probs)})
    for name in FUNCTIONALS:
        left, right = exact_sides(law, name)
        assert left == pytest.approx(right, rel=1e-12, abs=1e-12)


def test_degree_pair_monte_carlo(rng):
    rep = mtp_test(LAW, "degree_pair", 2, 20_000, rng)
    exact = exact_sides(LAW, "degree_pair")
    assert rep.passed
    assert abs(rep.left - exact[0]) <= 4 * rep.left_se


def test_horizon_too_small(rng):
    with pytest.raises(ValueError, match="horizon"):
        mtp_test(LAW, "inv_degree", 1, 10, rng)


def test_delta_one_exact(rng):
    d = OffspringLaw({1: 1.0})
    for name in FUNCTIONALS:
        left, right = exact_sides(d, name)
        assert left == right
        assert mtp_test(d, name, 2, 50, rng).passed


def test_verdict_rule():
    L = np.array([1.0, 2.0, 3.0, 4.0])
    assert paired_verdict("x", L, L, 0.99, "UGW").passed
    assert not paired_verdict("x", L, L + 1, 0.99, "UGW").passed
    rep = paired_verdict("x", L, L + np.array([0.1, -0.1, 0.1, -0.1]), 0.99, "UGW")
    assert rep.passed and rep.z == pytest.approx(2.5758, abs=1e-4)


def test_sample_sides_shares_trees(rng):
    out = sample_sides(LAW, ["edge", "inv_degree"], 2, 100, rng)
    # edge sides are root degrees; inv_degree left side is identically 1
    assert np.all(out["edge"][0] >= 2)
    assert np.allclose(out["inv_degree"][0], 1.0)


def test_trifurcation_points_star(free_group):
    g = free_group
    ws = [""] + [x * k for x in "abA" for k in range(1, 5)]
    states = [g.state_of(w) for w in ws]
    edges = [(g.state_of(w[:-1]), g.presentation.index(w[-1]), g.state_of(w)) for w in ws if w]
    front = [g.length(s) == 4 for s in states]
    tr = make_trace(g, states, edges, frontier=front, start_state=g.identity)
    assert trifurcation_points(tr) == [tr.start]
    out = prop31_transport(tr)
    assert out["points"] == 1 and out["out"] == 1.0
    # every vertex's nearest trifurcation point is o
    assert out["in"] == pytest.approx(tr.n)


def test_trifurcation_points_match_brute_force(surface_group, surface_q, rng):
    from brwends.branching import extract_trace, run_tree_indexed_walk, sample_ugw_tree
    from brwends.ends import reaching_after_removal

    law = OffspringLaw({1: 0.6, 2: 0.4})
    for _ in range(4):
        run = run_tree_indexed_walk(sample_ugw_tree(law, 10, rng), surface_q,
                                    surface_group.identity, rng, surface_group)
        tr = extract_trace(run)
        nbrs = tr.neighbors()
        brute = [v for v in range(tr.n) if reaching_after_removal(tr, (v,), nbrs=nbrs) >= 3]
        assert trifurcation_points(tr) == brute

import math

import pytest

from brwends.ball import build_ball
from brwends.branching import OffspringLaw
from brwends.prop32 import (NoSectorPoint, build_sectors, prop32_experiment, select_points)
from brwends.walk import tail_sum, uniform_measure


@pytest.fixture(scope="module")
def free_setup(free_group):
    return build_sectors(build_ball(free_group, 9))


def test_points_at_exact_distance(free_setup):
    g = free_setup.ball.group
    for K in (2, 3, 4):
        xs = select_points(free_setup, K)
        labels = [free_setup.partition.label(i) for i in xs]
        assert labels == ["S12", "S23", "S31"]
        for i in xs:
            s = free_setup.ball.state(i)
            # brute force over the stored ray vertices (long enough here)
            d = min(g.distance(s, r) for ray in free_setup.rays
                    for r in ray.states(g, g.length(s) + K + 1))
            assert d == K


def test_points_nearest_to_origin(free_setup):
    ball, part = free_setup.ball, free_setup.partition
    for K in (2, 3):
        for name, i in zip(("S12", "S23", "S31"), select_points(free_setup, K)):
            assert ball.dist[i] >= K            # o lies on gamma
            members = part.members(name)
            short = members[ball.dist[members] < ball.dist[i]]
            assert all(free_setup.gamma_distance(ball.state(int(j))) != K for j in short)


def test_no_point_when_ball_too_small(free_setup):
    with pytest.raises(NoSectorPoint):
        select_points(free_setup, 12)


def test_free_control_matches_visits_identity(free_setup, free, rng):
    q = uniform_measure(free)
    law = OffspringLaw({1: 0.9, 2: 0.1})        # m rho = 0.98: transient
    rep = prop32_experiment(free_setup.ball, q, law, 8, 1500, rng, Ks=(2, 4),
                            setup=free_setup)
    for row in rep.to_rows():
        assert abs(row["visits_z"]) <= 3.5
    assert rep.strictly_decreasing() and rep.markov_consistent() and rep.all_within_bound()
    assert rep.tail_decreasing()


def test_tail_form_tends_to_zero():
    vals = [tail_sum(2.0, 3.0, 0.5, K) for K in range(2, 40, 4)]
    assert all(b < a for a, b in zip(vals, vals[1:])) and vals[-1] < 1e-8


def test_depth_guard(free_setup, free, rng):
    with pytest.raises(ValueError, match="depth"):
        prop32_experiment(free_setup.ball, uniform_measure(free), OffspringLaw({1: .5, 2: .5}),
                          10, 2, rng, setup=free_setup)


def test_surface_small(surface_ball6, surface_q, rng):
    law = OffspringLaw({1: 0.643, 2: 0.357})
    rep = prop32_experiment(surface_ball6, surface_q, law, 6, 60, rng, Ks=(2, 3))
    assert rep.strictly_decreasing()
    assert all(r.p_hit <= r.mean_hits for r in rep.rows)
    assert math.isfinite(rep.C1) and 0 < rep.rho_decay < 1

"""
Three-sector experiment: sub-traces started inside different sectors rarely
touch the rays that bound them.

Three geodesic rays split a ball into sectors.  From a point x_i in each sector
at distance K from the rays, an independent BRW runs for N generations.  The
chance that its trace meets the rays is at most the expected number of visits
to them, which is sum_{y on the rays} G_m^(N)(x_i, y).  With N no larger than
the Green ball radius this sum is exact: an N-step walk from x_i only reaches
y with d(x_i, y) <= N, and every such term is computed by translation
G(x_i, y) = G(o, x_i^-1 y) from one truncated series at o.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from brwends.ball import geodesic_rays, sector_partition
from brwends.branching import run_tree_indexed_walk, sample_tree
from brwends.walk import ConvergenceError, fit_decay_values, green_sums, green_solve, sphere_maxima, tail_sum

log = logging.getLogger(__name__)

SECTORS = ("S12", "S23", "S31")


class NoSectorPoint(ValueError):
    pass


@dataclass
class SectorSetup:
    ball: object = field(repr=False)
    rays: list = field(repr=False)
    partition: object = field(repr=False)

    def gamma_distance(self, state):
        """Exact d(x, γ) for the infinite rays."""
        g = self.ball.group
        L = g.length(state)
        best = L
        for ray in self.rays:
            s = g.identity
            for k in range(1, L + best + 1):
                s = g.step(s, ray.letter(k - 1))
                if k - L > best:
                    break
                best = min(best, g.distance(state, s))
        return best


def build_sectors(ball, spread=True):
    rays = geodesic_rays(ball, 3, spread=spread)
    part = sector_partition(ball, rays)
    return SectorSetup(ball, rays, part)


def select_points(setup, K):
    """In each sector the vertex nearest to o with d(x, γ) = K (shortlex tie-break)."""
    ball, part = setup.ball, setup.partition
    on = np.zeros(ball.n, dtype=bool)
    for idx in part.ray_vertices:
        on[list(idx)] = True
    # in-ball distance to the truncated rays bounds d(x, γ) from above
    dB = _multi_bfs(ball, np.nonzero(on)[0])
    out = []
    for name in SECTORS:
        members = part.members(name)
        cand = members[dB[members] >= K]
        order = np.lexsort((cand, ball.dist[cand]))
        hit = None
        for i in cand[order]:
            st = ball.state(int(i))
            if setup.gamma_distance(st) == K:
                hit = int(i)
                break
        if hit is None:
            raise NoSectorPoint(f"no vertex of {name} at distance {K} from γ in the ball")
        out.append(hit)
    return out


def _multi_bfs(ball, sources):
    out = np.full(ball.n, -1, dtype=np.int64)
    out[sources] = 0
    frontier = np.asarray(sources)
    d = 0
    while len(frontier):
        d += 1
        nxt = ball.nbr[frontier].ravel()
        nxt = nxt[nxt >= 0]
        nxt = np.unique(nxt[out[nxt] < 0])
        out[nxt] = d
        frontier = nxt
    return out


@dataclass
class Prop32Row:
    K: int
    sector: str
    x: str
    x_length: int
    bound: float             # exact sum over γ of G_m^(N)(x, y)
    tail_form: float         # sum_{n >= K} C1 C2 n rho^n
    p_hit: float
    p_hit_se: float
    mean_hits: float         # E|Tr ∩ γ|
    mean_visits: float       # E[particle visits to γ]
    visits_se: float
    runs: int

    @property
    def within_bound(self):
        return self.p_hit <= self.bound + 3 * self.p_hit_se

    @property
    def visits_z(self):
        return (self.mean_visits - self.bound) / self.visits_se if self.visits_se > 0 else 0.0


@dataclass
class Prop32Report:
    rows: list
    C1: float
    C2: float
    rho_decay: float
    depth: int
    m: float
    rays: list
    sector_sizes: dict

    def bounds_by_K(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.K, []).append(r.bound)
        return out

    def strictly_decreasing(self):
        by = self.bounds_by_K()
        Ks = sorted(by)
        return all(by[k2][i] < by[k1][i] for k1, k2 in zip(Ks, Ks[1:]) for i in range(len(SECTORS)))

    def tail_decreasing(self):
        Ks = sorted({r.K for r in self.rows})
        t = [tail_sum(self.C1, self.C2, self.rho_decay, K) for K in Ks]
        return all(b < a for a, b in zip(t, t[1:]))

    def all_within_bound(self):
        return all(r.within_bound for r in self.rows)

    def markov_consistent(self):
        return all(r.p_hit <= r.mean_hits + 1e-12 for r in self.rows)

    def to_rows(self):
        return [{"K": r.K, "sector": r.sector, "x": r.x, "x_length": r.x_length,
                 "bound": r.bound, "tail_form": r.tail_form, "p_hit": r.p_hit,
                 "p_hit_se": r.p_hit_se, "mean_hits": r.mean_hits,
                 "mean_visits": r.mean_visits, "visits_se": r.visits_se,
                 "visits_z": r.visits_z, "runs": r.runs} for r in self.rows]


def envelope_C2(setup, xs, depth):
    """max over the chosen x and 1 <= n <= depth of |S(x,n) ∩ γ| / n (exact, via the group)."""
    g = setup.ball.group
    best = 0.0
    for i in xs:
        st = setup.ball.state(i)
        gam = set()
        for ray in setup.rays:
            gam.update(ray.states(g, g.length(st) + depth))
        per_n = np.bincount([g.distance(st, s) for s in gam], minlength=depth + 1)[:depth + 1]
        n = np.arange(1, depth + 1)
        best = max(best, float((per_n[1:] / n).max()))
    return best


@dataclass
class StartPoint:
    K: int
    sector: str
    index: int               # vertex index in the ball
    word: str
    state: tuple
    length: int
    gamma: frozenset = field(repr=False)   # ray states within reach of `depth` steps
    bound: float
    tail_form: float


@dataclass
class Prop32Plan:
    points: list
    C1: float
    C2: float
    rho_decay: float
    depth: int
    m: float
    rays: list
    sector_sizes: dict


def prop32_plan(ball, q, m, depth, Ks=(2, 4, 6, 8), setup=None, decay_ball=None):
    """Start points x_i per K and sector with their exact Green bounds and tail forms."""
    if depth > ball.radius:
        raise ValueError(f"depth {depth} exceeds the Green ball radius {ball.radius}")
    g = ball.group
    setup = setup or build_sectors(ball)
    G = green_sums(ball, 0, [m], depth, q)[0]
    dball = decay_ball or ball
    try:
        mx = sphere_maxima(dball, green_solve(dball, 0, m, q))
        fit = fit_decay_values(list(range(2, dball.radius + 1)), mx[2:])
        C1, rho_d = fit.C1_envelope, fit.rho_hat_decay
    except ConvergenceError:
        # m is past the radius of convergence: no decay, no tail form
        C1 = rho_d = math.nan
    all_x = {K: select_points(setup, K) for K in Ks}
    C2 = max(envelope_C2(setup, xs, depth) for xs in all_x.values())
    points = []
    for K in Ks:
        for name, xi in zip(SECTORS, all_x[K]):
            sx = ball.state(xi)
            L = g.length(sx)
            gam = set()
            for ray in setup.rays:
                gam.update(ray.states(g, L + depth + 1))
            bound = 0.0
            for s in gam:
                rel = g.relative(sx, s)
                if g.length(rel) <= depth:
                    bound += G[ball.walk(0, g.geodesic_word(rel))]
            points.append(StartPoint(
                K, name, xi, ball.presentation.spell(ball.word(xi)), sx, L, frozenset(gam),
                float(bound), tail_sum(C1, C2, rho_d, K)))
    return Prop32Plan(points, C1, C2, rho_d, depth, m,
                      [r.direction for r in setup.rays], setup.partition.sizes())


def simulate_replica(points, group, q, law, depth, rng, flavor="GW"):
    """One independent BRW from every start point: (distinct γ vertices hit, particle visits)."""
    hits = np.zeros(len(points))
    visits = np.zeros(len(points))
    for j, pt in enumerate(points):
        tree = sample_tree(law, depth, rng, flavor)
        run = run_tree_indexed_walk(tree, q, pt.state, rng, group)
        on = [s for s in run.states if s in pt.gamma]
        visits[j] = len(on)
        hits[j] = len(set(on))
    return hits, visits


def summarize(plan, hits, visits):
    """Report from (runs, points) arrays of per-replica hits and visits."""
    runs = hits.shape[0]
    rows = []
    for j, pt in enumerate(plan.points):
        h, v = hits[:, j], visits[:, j]
        p = float((h > 0).mean())
        rows.append(Prop32Row(
            pt.K, pt.sector, pt.word, pt.length, pt.bound, pt.tail_form, p,
            math.sqrt(max(p * (1 - p), 1e-300) / runs) if runs > 1 else 0.0,
            float(h.mean()), float(v.mean()),
            float(v.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0, runs))
    return Prop32Report(rows, plan.C1, plan.C2, plan.rho_decay, plan.depth, plan.m,
                        plan.rays, plan.sector_sizes)


def prop32_experiment(ball, q, law, depth, runs, rng, Ks=(2, 4, 6, 8), flavor="GW",
                      setup=None, decay_ball=None):
    """Exact Green bound, fitted tail form and BRW hitting frequencies per K and sector."""
    plan = prop32_plan(ball, q, law.mean, depth, Ks, setup, decay_ball)
    out = [simulate_replica(plan.points, ball.group, q, law, depth, rng, flavor)
           for _ in range(runs)]
    hits = np.array([h for h, _ in out]).reshape(runs, len(plan.points))
    visits = np.array([v for _, v in out]).reshape(runs, len(plan.points))
    return summarize(plan, hits, visits)

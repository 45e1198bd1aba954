"""
Empirical Mass-Transport Principle tests on rooted random trees and traces.

For a transport f(G, x, y) of bounded range the principle reads
E[sum_x f(G, o, x)] = E[sum_x f(G, x, o)].  Both sides are estimated on the
same samples, and the paired difference decides the verdict.
"""

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from brwends.branching import sample_gw_tree, sample_ugw_tree


@dataclass(frozen=True)
class Functional:
    name: str
    pair_range: int          # f(x, y) = 0 when d(x, y) > pair_range
    neighborhood: int        # f looks this far around x and y
    f: object                # f(deg, x, y) -> float
    exact: bool = False      # both sides agree termwise


def _edge(deg, x, y):
    return 1.0


def _inv_deg(deg, x, y):
    return 1.0 / deg[x]


def _deg_pair(deg, x, y):
    return 1.0 if deg[x] == 2 and deg[y] == 3 else 0.0


FUNCTIONALS = {
    "edge": Functional("edge", 1, 0, _edge, exact=True),
    "inv_degree": Functional("inv_degree", 1, 1, _inv_deg),
    "degree_pair": Functional("degree_pair", 1, 1, _deg_pair),
}


@dataclass
class MTPTestReport:
    functional: str
    left: float
    right: float
    left_se: float
    right_se: float
    diff_se: float
    samples: int
    confidence: float
    z: float
    passed: bool
    flavor: str = "UGW"

    def to_dict(self):
        return dict(self.__dict__)


def sides_on_tree(tree, functional):
    """(sum_x f(o,x), sum_x f(x,o)) for adjacent pairs at the root of a family tree."""
    deg = tree.degrees()
    nbrs = np.nonzero(tree.parent == 0)[0]
    left = sum(functional.f(deg, 0, int(x)) for x in nbrs)
    right = sum(functional.f(deg, int(x), 0) for x in nbrs)
    return left, right


def paired_verdict(name, L, R, confidence, flavor):
    L, R = np.asarray(L, float), np.asarray(R, float)
    n = len(L)
    D = L - R
    se = lambda a: float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    z = float(norm.ppf(0.5 + confidence / 2))
    dse = se(D)
    diff = float(D.mean())
    passed = abs(diff) <= z * dse if dse > 0 else diff == 0.0
    return MTPTestReport(name, float(L.mean()), float(R.mean()), se(L), se(R), dse, n,
                         confidence, z, bool(passed), flavor)


def _functional(f):
    return FUNCTIONALS[f] if isinstance(f, str) else f


def sample_sides(law, functional_ids, horizon, samples, rng, flavor="UGW"):
    """Both sides of every functional on the same `samples` rooted trees.

    Returns {name: (left array, right array)}.
    """
    fns = [_functional(f) for f in functional_ids]
    for fn in fns:
        need = fn.pair_range + fn.neighborhood
        if need > horizon:
            raise ValueError(f"functional {fn.name} needs horizon {need}, got {horizon}")
    sampler = sample_ugw_tree if flavor == "UGW" else sample_gw_tree
    out = {fn.name: (np.empty(samples), np.empty(samples)) for fn in fns}
    for i in range(samples):
        tree = sampler(law, horizon, rng)
        for fn in fns:
            L, R = out[fn.name]
            L[i], R[i] = sides_on_tree(tree, fn)
    return out


def mtp_test(law, functional_id, horizon, samples, rng, confidence=0.99, flavor="UGW"):
    """Monte Carlo estimate of both sides on rooted UGW (or GW, as a control) trees."""
    fn = _functional(functional_id)
    L, R = sample_sides(law, [fn], horizon, samples, rng, flavor)[fn.name]
    return paired_verdict(fn.name, L, R, confidence, flavor)


def exact_sides(law, functional_id, flavor="UGW"):
    """Exact expectations of both sides by enumerating every depth-2 tree."""
    fn = _functional(functional_id)
    if fn.pair_range + fn.neighborhood > 2:
        raise ValueError("exhaustive enumeration covers depth-2 functionals only")
    mu = dict(law.probabilities)
    root = law.ugw_root_law() if flavor == "UGW" else dict(mu)
    left = right = 0.0
    for D, pD in root.items():
        for ks in itertools.product(list(mu), repeat=D):
            p = pD * math.prod(mu[k] for k in ks)
            deg = np.array([D] + [k + 1 for k in ks])
            left += p * sum(fn.f(deg, 0, x) for x in range(1, D + 1))
            right += p * sum(fn.f(deg, x, 0) for x in range(1, D + 1))
    return left, right


# ---------------------------------------------------------------------------
# transport through nearest trifurcation points (diagnostic on traces)


def trifurcation_points(trace, horizon="frontier"):
    """Vertices v with at least 3 horizon-reaching components in Tr minus v.

    One depth-first pass: a DFS child subtree with low[c] >= disc[v] becomes its
    own component when v is removed, the rest of the trace forms one more.
    """
    from brwends.ends import _reaching

    nbrs = trace.neighbors()
    mark = _reaching(trace, horizon).astype(np.int64)
    n = trace.n
    disc = [-1] * n
    low = [0] * n
    sub = [0] * n
    out = []
    timer = 0
    for root in range(n):
        if disc[root] >= 0:
            continue
        stack = [(root, -1, iter(nbrs[root]))]
        disc[root] = low[root] = timer
        timer += 1
        sub[root] = int(mark[root])
        sep = {root: []}
        order = [root]
        while stack:
            v, p, it = stack[-1]
            advanced = False
            for w in it:
                if disc[w] < 0:
                    disc[w] = low[w] = timer
                    timer += 1
                    sub[w] = int(mark[w])
                    sep[w] = []
                    order.append(w)
                    stack.append((w, v, iter(nbrs[w])))
                    advanced = True
                    break
                if w != p:
                    low[v] = min(low[v], disc[w])
            if advanced:
                continue
            stack.pop()
            if p >= 0:
                low[p] = min(low[p], low[v])
                sub[p] += sub[v]
                if low[v] >= disc[p]:
                    sep[p].append(sub[v])
        comp_total = sub[root]
        for v in order:
            parts = [s > 0 for s in sep[v]]
            rest = comp_total - mark[v] - sum(sep[v])
            if v != root:
                parts.append(rest > 0)
            if sum(parts) >= 3:
                out.append(v)
    return sorted(out)


def _bfs(nbrs, s, limit=None):
    d = {s: 0}
    dq = deque([s])
    while dq:
        x = dq.popleft()
        if limit is not None and d[x] >= limit:
            continue
        for y in nbrs[x]:
            if y not in d:
                d[y] = d[x] + 1
                dq.append(y)
    return d


def prop31_transport(trace, horizon="frontier"):
    """Mass sent and received by the start vertex when each x spreads unit mass
    evenly over its nearest trifurcation points."""
    T = set(trifurcation_points(trace, horizon))
    o = trace.start
    if not T:
        return {"out": 0.0, "in": 0.0, "points": 0}
    nbrs = trace.neighbors()
    # multi-source distances to T
    dT = {t: 0 for t in T}
    dq = deque(T)
    while dq:
        x = dq.popleft()
        for y in nbrs[x]:
            if y not in dT:
                dT[y] = dT[x] + 1
                dq.append(y)
    received = 0.0
    if o in T:
        do = _bfs(nbrs, o)
        for x, d in do.items():
            if dT.get(x) != d:
                continue
            dx = _bfs(nbrs, x, d)
            nearest = sum(1 for t in T if dx.get(t) == d)
            received += 1.0 / nearest
    return {"out": 1.0, "in": received, "points": len(T)}

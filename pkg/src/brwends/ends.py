"""
Finite-scale end structure of traces.

An infinite component cannot be recognized from a finite trace, so components
are called horizon-reaching instead.  Two horizons are supported:

* ``"frontier"`` (default): the component holds a particle of the last
  simulated generation, i.e. the walk was still exploring it when stopped;
* an integer H: the component reaches distance >= H from o.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components


class TraceTooShallow(ValueError):
    pass


def _reaching(trace, horizon):
    if horizon == "frontier":
        return trace.frontier
    if isinstance(horizon, (int, np.integer)):
        return trace.distance >= horizon
    raise ValueError(f"unknown horizon {horizon!r}")


def components_without(trace, removed, horizon="frontier", adjacency=None):
    """Components of the trace minus a vertex mask; (labels, component count, reaching flags).

    labels[v] = -1 for removed vertices.
    """
    adj = trace.adjacency() if adjacency is None else adjacency
    keep = ~removed
    idx = np.nonzero(keep)[0]
    sub = adj[idx][:, idx]
    ncomp, lab = connected_components(sub, directed=False)
    labels = np.full(trace.n, -1, dtype=np.int64)
    labels[idx] = lab
    reach = np.zeros(ncomp, dtype=bool)
    mark = _reaching(trace, horizon)[idx]
    reach[lab[mark]] = True
    return labels, ncomp, reach


@dataclass
class ComponentDecomposition:
    r: int
    components: list         # vertex index arrays, ordered by smallest vertex index
    horizon_reaching: list

    @property
    def reaching(self):
        return [c for c, h in zip(self.components, self.horizon_reaching) if h]

    def count_reaching(self):
        return int(sum(self.horizon_reaching))


def decompose(trace, r, horizon="frontier", adjacency=None):
    """Connected components of the trace outside B(o, r)."""
    if r < 0:
        raise ValueError("r must be nonnegative")
    if trace.distance.max() <= r:
        raise TraceTooShallow(f"trace reaches distance {trace.distance.max()}, not beyond {r}")
    labels, ncomp, reach = components_without(trace, trace.distance <= r, horizon, adjacency)
    order = np.argsort(labels, kind="stable")
    lab_sorted = labels[order]
    start = np.searchsorted(lab_sorted, 0)
    groups = np.split(order[start:], np.nonzero(np.diff(lab_sorted[start:]))[0] + 1)
    groups = [g for g in groups if len(g)]
    # scipy labels follow smallest index already; sort explicitly to be safe
    groups.sort(key=lambda g: int(g.min()))
    flags = [bool(reach[labels[g[0]]]) for g in groups]
    return ComponentDecomposition(r, groups, flags)


@dataclass
class EndNode:
    level: int
    vertices: np.ndarray = field(repr=False)
    parent: int              # index into the previous level, -1 at level 0
    children: list = field(default_factory=list)


@dataclass
class EndStructureTree:
    radii: list
    levels: list             # per radius, list of EndNode (horizon-reaching components)

    def counts(self):
        return [len(level) for level in self.levels]

    def to_rows(self):
        return [{"radius": r, "components": len(lv)} for r, lv in zip(self.radii, self.levels)]


def end_structure(trace, radii, horizon="frontier"):
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    adj = trace.adjacency()
    levels = []
    owner = None
    for k, r in enumerate(radii):
        dec = decompose(trace, r, horizon, adj)
        nodes = []
        new_owner = np.full(trace.n, -1, dtype=np.int64)
        for comp in dec.reaching:
            par = -1
            if k > 0:
                ps = np.unique(owner[comp])
                if len(ps) != 1 or ps[0] < 0:
                    raise RuntimeError("component not contained in a single parent component")
                par = int(ps[0])
                levels[-1][par].children.append(len(nodes))
            new_owner[comp] = len(nodes)
            nodes.append(EndNode(k, comp, par))
        levels.append(nodes)
        owner = new_owner
    return EndStructureTree(radii, levels)


@dataclass
class EndCensus:
    counts: list             # horizon-reaching components per radius
    chains: list             # maximal non-branching chains as (start level, end level)
    isolated_candidates: int
    window: int

    def to_dict(self):
        return {"counts": self.counts, "chains": [list(c) for c in self.chains],
                "isolated_candidates": self.isolated_candidates, "window": self.window}


def end_census(structure, window=3):
    """Per-radius counts and isolated-end candidates.

    A candidate is a final-level node whose ancestors over the last `window`
    levels never branch.
    """
    L = len(structure.levels)
    if L < window:
        raise ValueError(f"structure has {L} levels, window needs {window}")
    levels = structure.levels
    cand = 0
    for node in levels[-1]:
        ok = True
        cur = node
        for _ in range(window - 1):
            par = levels[cur.level - 1][cur.parent]
            if len(par.children) != 1:
                ok = False
                break
            cur = par
        cand += ok
    # maximal chains: runs of single-child links
    chains = []
    for lv, nodes in enumerate(levels):
        for node in nodes:
            if lv > 0 and len(levels[lv - 1][node.parent].children) == 1:
                continue
            end = lv
            cur = node
            while len(cur.children) == 1:
                cur = levels[end + 1][cur.children[0]]
                end += 1
            chains.append((lv, end))
    return EndCensus(structure.counts(), chains, cand, window)


# ---------------------------------------------------------------------------
# trifurcation sets


@dataclass
class TrifurcationReport:
    n: int
    found: list              # sorted vertex-index tuples
    exhaustive: bool
    checked: int
    horizon: object = "frontier"

    def to_dict(self, trace=None):
        out = {"n": self.n, "found": len(self.found), "exhaustive": self.exhaustive,
               "checked": self.checked}
        if trace is not None:
            out["sets"] = [[trace.group.presentation.spell(trace.group.normal_form(trace.states[v]))
                            for v in A] for A in self.found]
        return out


def _bfs_ball(nbrs, v, k):
    seen = {v: 0}
    dq = deque([v])
    while dq:
        x = dq.popleft()
        if seen[x] == k:
            continue
        for y in nbrs[x]:
            if y not in seen:
                seen[y] = seen[x] + 1
                dq.append(y)
    return seen


def reaching_after_removal(trace, A, horizon="frontier", nbrs=None):
    """Independent plain-BFS count of horizon-reaching components of Tr minus A."""
    nbrs = trace.neighbors() if nbrs is None else nbrs
    mark = _reaching(trace, horizon)
    removed = set(A)
    seen = set(removed)
    count = 0
    for s in range(trace.n):
        if s in seen:
            continue
        seen.add(s)
        dq = deque([s])
        hit = False
        while dq:
            x = dq.popleft()
            hit = hit or bool(mark[x])
            for y in nbrs[x]:
                if y not in seen:
                    seen.add(y)
                    dq.append(y)
        count += hit
    return count


def _connected_sets(nbrs, n, budget):
    """All connected vertex sets of trace diameter <= n, or None past the budget."""
    dist = {}

    def d(x):
        if x not in dist:
            dist[x] = _bfs_ball(nbrs, x, n)
        return dist[x]

    seen = set()
    stack = []
    for v in range(len(nbrs)):
        S = frozenset((v,))
        seen.add(S)
        stack.append(S)
    while stack:
        S = stack.pop()
        for s in S:
            for u in nbrs[s]:
                if u in S:
                    continue
                T = S | {u}
                if T in seen or any(x not in d(u) for x in S):
                    continue
                seen.add(T)
                if len(seen) > budget:
                    return None
                stack.append(T)
    return sorted((tuple(sorted(S)) for S in seen), key=lambda A: (len(A), A))


def find_trifurcation_sets(trace, n, budget=20_000, horizon="frontier", first_only=True):
    """Sets A of trace diameter <= n whose removal leaves >= 3 horizon-reaching components.

    With few enough connected candidates all of them are checked (exhaustive);
    otherwise trace balls B(v, k), k <= n/2, and for odd n unions of two adjacent
    balls of radius (n-1)/2, are tried in order of distance from o until the
    budget runs out.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    nbrs = trace.neighbors()
    adj = trace.adjacency()
    sets = _connected_sets(nbrs, n, budget)
    exhaustive = sets is not None
    if not exhaustive:
        sets = _ball_candidates(trace, nbrs, n)
    found, checked, seen = [], 0, set()
    for A in sets:
        if A in seen:
            continue
        seen.add(A)
        if checked >= budget:
            exhaustive = False
            break
        checked += 1
        mask = np.zeros(trace.n, dtype=bool)
        mask[list(A)] = True
        _, _, reach = components_without(trace, mask, horizon, adj)
        if reach.sum() >= 3:
            if reaching_after_removal(trace, A, horizon, nbrs) < 3:
                raise RuntimeError("trifurcation verification disagrees")
            found.append(A)
            if first_only:
                break
    return TrifurcationReport(n, found, exhaustive, checked, horizon)


def _ball_candidates(trace, nbrs, n):
    order = np.lexsort((np.arange(trace.n), trace.distance))
    half = n // 2
    for v in order.tolist():
        balls = [tuple(sorted(_bfs_ball(nbrs, v, k))) for k in range(half + 1)]
        yield from balls
        if n % 2 == 1:
            base = set(balls[-1])
            for w in nbrs[v]:
                yield tuple(sorted(base | set(_bfs_ball(nbrs, w, half))))

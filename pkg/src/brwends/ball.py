"""
Finite balls B(o, r) of Cayley graphs.

Vertices are numbered in shortlex order of their normal forms, which is the
order a breadth-first search discovers them when parents are expanded in
order and generators in presentation order.  Every builder below produces that
numbering, so balls from different constructions can be compared array for
array.

Builders:

* ``"free"``     closed-form tree enumeration (vectorized),
* ``"tiling"``   surface group through exact tiling states (vectorized),
* ``"group"``    generic BFS over any `Group` solver (used with Dehn rewriting),
* ``"folding"``  presentation-only: trace relator loops from each vertex during
                 the BFS and merge coincident endpoints.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from brwends import tiling
from brwends.group import FreeGroup, GroupElement, SurfaceGroup, cyclic_words, make_group

log = logging.getLogger(__name__)

DEFAULT_MAX_VERTICES = 12_000_000


class BallSizeError(RuntimeError):
    def __init__(self, radius_reached, vertices, cap):
        super().__init__(
            f"ball size cap {cap} exceeded at radius {radius_reached} ({vertices} vertices)")
        self.radius_reached = radius_reached


class NotInBallError(KeyError):
    pass


@dataclass(eq=False)
class CayleyBall:
    group: object
    radius: int
    nbr: np.ndarray          # (n, rank) int32, -1 where the neighbour is outside
    dist: np.ndarray         # (n,) int16
    parent: np.ndarray       # (n,) int32, BFS parent (shortlex)
    parent_gen: np.ndarray   # (n,) int8, generator from parent to vertex
    method: str = ""
    _gather: np.ndarray = field(default=None, repr=False)

    @property
    def presentation(self):
        return self.group.presentation

    @property
    def n(self):
        return self.nbr.shape[0]

    def __len__(self):
        return self.n

    @property
    def sphere_sizes(self):
        return np.bincount(self.dist, minlength=self.radius + 1).tolist()

    @property
    def sphere_offsets(self):
        return np.concatenate([[0], np.cumsum(self.sphere_sizes)])

    def sphere(self, k):
        off = self.sphere_offsets
        return np.arange(off[k], off[k + 1])

    def degrees(self):
        return (self.nbr >= 0).sum(axis=1)

    @property
    def gather_index(self):
        """Neighbour table with -1 replaced by n (a zero slot for vector gathers)."""
        if self._gather is None:
            g = self.nbr.copy()
            g[g < 0] = self.n
            self._gather = g
        return self._gather

    # -- naming vertices ------------------------------------------------------

    def word(self, i):
        out = []
        while i != 0:
            out.append(int(self.parent_gen[i]))
            i = int(self.parent[i])
        return tuple(reversed(out))

    def element(self, i):
        return GroupElement(self.word(int(i)))

    def state(self, i):
        return self.group.state_of(self.word(int(i)))

    def walk(self, start, word):
        """Follow `word` from vertex index `start`; -1 once the path leaves the ball."""
        v = int(start)
        for t in word:
            v = int(self.nbr[v, t])
            if v < 0:
                return -1
        return v

    def index_of(self, x):
        """Index of a GroupElement, word, or solver state."""
        if isinstance(x, (int, np.integer)):
            if not 0 <= x < self.n:
                raise NotInBallError(x)
            return int(x)
        if isinstance(x, GroupElement):
            word = x.normal_form
        elif isinstance(x, str):
            word = self.group.geodesic_word(self.group.state_of(x))
        elif isinstance(x, tuple) and isinstance(self.group, SurfaceGroup) and len(x) == tiling.STATE_LEN:
            word = self.group.geodesic_word(x)
        else:
            word = self.group.geodesic_word(self.group.state_of(x))
        if len(word) > self.radius:
            raise NotInBallError(f"{self.presentation.spell(word)} lies outside B(o,{self.radius})")
        v = self.walk(0, word)
        if v < 0:
            raise NotInBallError(self.presentation.spell(word))
        return v

    def __contains__(self, x):
        try:
            self.index_of(x)
        except NotInBallError:
            return False
        return True

    def restrict(self, r):
        """The sub-ball B(o, r) as its own CayleyBall (prefix of the numbering)."""
        if r > self.radius:
            raise ValueError(f"cannot restrict radius {self.radius} ball to {r}")
        m = int(self.sphere_offsets[r + 1])
        nbr = self.nbr[:m].copy()
        nbr[nbr >= m] = -1
        return CayleyBall(self.group, r, nbr, self.dist[:m].copy(), self.parent[:m].copy(),
                          self.parent_gen[:m].copy(), self.method)

    def edges(self):
        """Directed edges (vertex, generator, neighbour) inside the ball."""
        v, t = np.nonzero(self.nbr >= 0)
        return v, t, self.nbr[v, t]


# ---------------------------------------------------------------------------
# builders


def build_ball(group_or_presentation, radius, method="auto", max_vertices=DEFAULT_MAX_VERTICES):
    if radius < 0:
        raise ValueError("radius must be nonnegative")
    group = group_or_presentation
    if not hasattr(group, "step"):
        group = make_group(group_or_presentation)
    if method == "auto":
        if isinstance(group, FreeGroup):
            method = "free"
        elif isinstance(group, SurfaceGroup):
            method = "tiling"
        else:
            method = "group"
    builders = {"free": _build_free, "tiling": _build_tiling, "group": _build_group,
                "folding": _build_folding}
    try:
        builder = builders[method]
    except KeyError:
        raise ValueError(f"unknown ball construction {method!r}") from None
    nbr, dist, parent, pgen = builder(group, radius, max_vertices)
    log.debug("built %s ball radius %d: %d vertices", method, radius, len(dist))
    return CayleyBall(group, radius, nbr, dist, parent, pgen, method)


def _alloc(n, rank):
    return (np.full((n, rank), -1, dtype=np.int32), np.zeros(n, dtype=np.int16),
            np.zeros(n, dtype=np.int32), np.zeros(n, dtype=np.int8))


def _build_free(group, radius, cap):
    k = group.rank
    inv = np.array(group.inverses)
    sizes = [1] + [k * (k - 1) ** (j - 1) for j in range(1, radius + 1)]
    total = sum(sizes)
    if total > cap:
        raise BallSizeError(next(j for j in range(radius + 1) if sum(sizes[:j + 1]) > cap) - 1,
                            total, cap)
    nbr, dist, parent, pgen = _alloc(total, k)
    last = np.array([-1])
    level = np.array([0])
    start = 1
    for j in range(1, radius + 1):
        allowed = np.ones((len(level), k), dtype=bool)
        has = last >= 0
        allowed[np.nonzero(has)[0], inv[last[has]]] = False
        pv, pt = np.nonzero(allowed)
        child = start + np.arange(len(pv))
        par = level[pv]
        nbr[par, pt] = child
        nbr[child, inv[pt]] = par
        dist[child] = j
        parent[child] = par
        pgen[child] = pt
        level, last, start = child, pt, start + len(pv)
    return nbr, dist, parent, pgen


_HASH_MULT = np.array([((0x9E3779B97F4A7C15 ^ (i * 0x632BE59BD9B4E019)) | 1) & 0xFFFFFFFFFFFFFFFF
                       for i in range(16)],
                      dtype=np.uint64)


def _row_hash(U):
    with np.errstate(over="ignore"):
        h = np.zeros(U.shape[0], dtype=np.uint64)
        for i in range(U.shape[1]):
            h = h * np.uint64(0x100000001B3) + U[:, i].astype(np.uint64) * _HASH_MULT[i]
            h ^= h >> np.uint64(29)
    return h


def _build_tiling(group, radius, cap):
    k = group.rank
    inv = group.inverses
    dist_l, par_l, pgen_l = [], [], []
    U, rot, flip = tiling.identity_arrays()
    n_total = 1
    level_base = 0
    rows_nbr = [np.full((1, k), -1, dtype=np.int32)]
    dist_l.append(np.zeros(1, dtype=np.int16))
    par_l.append(np.zeros(1, dtype=np.int32))
    pgen_l.append(np.zeros(1, dtype=np.int8))
    for j in range(1, radius + 1):
        cand_par, cand_gen, cand_hash, cand_rows = [], [], [], []
        for t in range(k):
            U2, r2, f2, up = tiling.step_array(U, rot, flip, t)
            idx = np.nonzero(up)[0]
            cand_par.append(idx)
            cand_gen.append(np.full(len(idx), t, dtype=np.int8))
            cand_hash.append(_row_hash(U2[idx]))
            keep = j < radius
            cand_rows.append((U2[idx], r2[idx], f2[idx]) if keep else None)
        par = np.concatenate(cand_par)
        gen = np.concatenate(cand_gen)
        hsh = np.concatenate(cand_hash)
        order = np.lexsort((gen, par))
        par, gen, hsh = par[order], gen[order], hsh[order]
        uniq, first, inverse = np.unique(hsh, return_index=True, return_inverse=True)
        # children numbered by first discovery (parent, generator) -> shortlex
        rank_of = np.empty(len(uniq), dtype=np.int64)
        rank_of[np.argsort(first, kind="stable")] = np.arange(len(uniq))
        child_local = rank_of[inverse]
        n_new = len(uniq)
        if n_total + n_new > cap:
            raise BallSizeError(j - 1, n_total + n_new, cap)
        _check_collisions(group, U, rot, flip, par, gen, child_local, first[np.argsort(first)])
        new_base = n_total
        child = new_base + child_local
        prev_nbr = rows_nbr[-1]
        prev_nbr[par, gen] = child
        block = np.full((n_new, k), -1, dtype=np.int32)
        block[child_local, np.asarray(inv)[gen]] = level_base + par
        rows_nbr.append(block)
        firsts = np.sort(first)
        dist_l.append(np.full(n_new, j, dtype=np.int16))
        par_l.append((level_base + par[firsts]).astype(np.int32))
        pgen_l.append(gen[firsts])
        if j < radius:
            allU = np.concatenate([c[0] for c in cand_rows])[order]
            allr = np.concatenate([c[1] for c in cand_rows])[order]
            allf = np.concatenate([c[2] for c in cand_rows])[order]
            U, rot, flip = allU[firsts], allr[firsts], allf[firsts]
        level_base = new_base
        n_total += n_new
    nbr = np.concatenate(rows_nbr)
    return nbr, np.concatenate(dist_l), np.concatenate(par_l), np.concatenate(pgen_l)


def _check_collisions(group, U, rot, flip, par, gen, child_local, first_sorted):
    """Hash buckets must hold one element each: recompute a sample of merged pairs exactly."""
    counts = np.bincount(child_local)
    merged = np.nonzero(counts[child_local] > 1)[0]
    if len(merged) == 0:
        return
    rng = np.random.default_rng(len(merged))
    sample = merged if len(merged) <= 4096 else rng.choice(merged, 4096, replace=False)
    rep = first_sorted[child_local[sample]]
    for a, b in zip(sample, rep):
        sa = tiling.step(tiling.state_from_arrays(U[par[a]], rot[par[a]], flip[par[a]], 0), int(gen[a]))
        sb = tiling.step(tiling.state_from_arrays(U[par[b]], rot[par[b]], flip[par[b]], 0), int(gen[b]))
        if sa[:16] != sb[:16]:
            raise RuntimeError("hash collision while merging tiling states")


def _build_group(group, radius, cap):
    k = group.rank
    index = {group.identity: 0}
    states = [group.identity]
    nbr = [[-1] * k]
    dist = [0]
    parent = [0]
    pgen = [0]
    i = 0
    while i < len(states):
        s = states[i]
        for t in range(k):
            if nbr[i][t] >= 0:
                continue
            s2 = group.step(s, t)
            j = index.get(s2)
            if j is None:
                if dist[i] == radius:
                    continue
                j = len(states)
                if j >= cap:
                    raise BallSizeError(dist[i], j, cap)
                index[s2] = j
                states.append(s2)
                nbr.append([-1] * k)
                dist.append(dist[i] + 1)
                parent.append(i)
                pgen.append(t)
            nbr[i][t] = j
            nbr[j][group.inverses[t]] = i
        i += 1
    return (np.array(nbr, dtype=np.int32), np.array(dist, dtype=np.int16),
            np.array(parent, dtype=np.int32), np.array(pgen, dtype=np.int8))


def _build_folding(group, radius, cap):
    pres = group.presentation
    k = pres.rank
    inv = pres.inverses
    # loops through the edge v->v.t: v.t = v.w^-1 for every cyclic relator t.w
    closings = {t: [] for t in range(k)}
    for c in cyclic_words(pres):
        closings[c[0]].append(pres.invert(c[1:]))
    nbr = [[-1] * k]
    dist = [0]
    parent = [0]
    pgen = [0]
    i = 0
    while i < len(nbr):
        for t in range(k):
            if nbr[i][t] >= 0:
                continue
            target = None
            for path in closings[t]:
                x = i
                for g in path:
                    x = nbr[x][g]
                    if x < 0:
                        break
                if x >= 0:
                    target = x
                    break
            if target is None:
                if dist[i] == radius:
                    continue
                target = len(nbr)
                if target >= cap:
                    raise BallSizeError(dist[i], target, cap)
                nbr.append([-1] * k)
                dist.append(dist[i] + 1)
                parent.append(i)
                pgen.append(t)
            nbr[i][t] = target
            nbr[target][inv[t]] = i
        i += 1
    return (np.array(nbr, dtype=np.int32), np.array(dist, dtype=np.int16),
            np.array(parent, dtype=np.int32), np.array(pgen, dtype=np.int8))


def bfs_distances(ball, source):
    """Graph distances inside the ball from vertex index `source` (-1 if unreachable)."""
    out = np.full(ball.n, -1, dtype=np.int32)
    out[source] = 0
    frontier = np.array([source])
    d = 0
    nbr = ball.nbr
    while len(frontier):
        d += 1
        nxt = nbr[frontier].ravel()
        nxt = nxt[nxt >= 0]
        nxt = np.unique(nxt[out[nxt] < 0])
        out[nxt] = d
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# metric queries (exact, through the group solver)


def _state(ball, x):
    ball.index_of(x)
    return ball.group.state_of_element(x)


def distance(ball, x, y):
    """d(x, y) for elements of the ball."""
    return ball.group.distance(_state(ball, x), _state(ball, y))


def geodesic_segment(ball, x, y):
    """Vertices of the shortlex-least geodesic from x to y, both ends included."""
    g = ball.group
    sx = _state(ball, x)
    _state(ball, y)
    word = g.normal_form(g.relative(sx, g.state_of_element(y)))
    out = [x]
    s = sx
    for t in word:
        s = g.step(s, t)
        out.append(g.element(s))
    return out


@dataclass(frozen=True)
class GeodesicRay:
    vertices: tuple          # GroupElements, vertices[i] at distance i from o
    direction: tuple         # generator word repeated to extend the ray

    def __len__(self):
        return len(self.vertices) - 1

    def letter(self, k):
        """Generator carrying vertices[k] to vertices[k+1] (valid beyond the stored prefix)."""
        return self.direction[k % len(self.direction)]

    def states(self, group, length):
        s = group.identity
        out = [s]
        for k in range(length):
            s = group.step(s, self.letter(k))
            out.append(s)
        return out


class DivergenceError(ValueError):
    pass


def _power_states(group, t, length):
    s = group.identity
    out = [s]
    for _ in range(length):
        s = group.step(s, t)
        out.append(s)
    return out


def geodesic_rays(ball, count=3, length=None, threshold=None, spread=False):
    """`count` geodesic rays from o along powers of single generators.

    The first tuple in generator order is returned whose rays are geodesic,
    meet only at o, have nondecreasing pairwise tail distances, and end at
    least `threshold` (default length/2) apart.  With ``spread=True`` the
    certified tuple with the widest smallest gap in the planar order wins.
    """
    from itertools import combinations

    g = ball.group
    L = ball.radius if length is None else length
    if L > ball.radius:
        raise ValueError(f"ray length {L} exceeds ball radius {ball.radius}")
    if L < 1:
        raise DivergenceError("rays need length at least 1")
    thr = L / 2 if threshold is None else threshold
    cands = {}
    for t in range(g.rank):
        st = _power_states(g, t, L)
        if g.length(st[-1]) == L:
            cands[t] = st
    combos = list(combinations(sorted(cands), count))
    if spread:
        pos = ball.presentation.rotation_positions()
        deg = len(pos)

        def min_gap(c):
            p = sorted(pos[t] for t in c)
            return min((p[(i + 1) % len(p)] - p[i]) % deg for i in range(len(p)))

        combos.sort(key=lambda c: -min_gap(c))
    for combo in combos:
        seen = set()
        ok = True
        for t in combo:
            rest = set(cands[t][1:])
            if rest & seen:
                ok = False
                break
            seen |= rest
        if not ok:
            continue
        for t, u in combinations(combo, 2):
            d = [g.distance(a, b) for a, b in zip(cands[t], cands[u])]
            if any(d1 < d0 for d0, d1 in zip(d, d[1:])) or d[-1] < thr:
                ok = False
                break
        if ok:
            return [GeodesicRay(tuple(g.element(s) for s in cands[t]), (t,)) for t in combo]
    raise DivergenceError(f"no {count} divergent generator rays certified in a radius-{L} ball")


SECTOR_NAMES = ("on-γ", "S12", "S23", "S31")
ON_GAMMA = 0


@dataclass(eq=False)
class SectorPartition:
    assignment: np.ndarray   # (n,) int8 codes into SECTOR_NAMES
    ray_vertices: tuple      # per ray, vertex indices inside the ball

    def label(self, i):
        return SECTOR_NAMES[int(self.assignment[i])]

    def members(self, name):
        return np.nonzero(self.assignment == SECTOR_NAMES.index(name))[0]

    def sizes(self):
        return {name: int((self.assignment == c).sum()) for c, name in enumerate(SECTOR_NAMES)}


def _sector_code(i, j):
    pair = frozenset((i, j))
    return {frozenset((0, 1)): 1, frozenset((1, 2)): 2, frozenset((2, 0)): 3}[pair]


def sector_partition(ball, rays):
    """Assign every ball vertex to on-γ or to the sector between two consecutive rays.

    Sides are read off the planar cyclic order: at a ray vertex the generators
    met going forward from the outgoing edge up to the incoming edge lie on one
    side, the rest on the other.  Sectors are then the connected components of
    the ball minus γ, labelled by the side they touch.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    pres = ball.presentation
    if not pres.planar_order:
        raise ValueError("sector partition needs a planar order")
    if len(rays) != 3:
        raise ValueError("sector partition takes exactly three rays")
    pos = pres.rotation_positions()
    deg = len(pos)
    at_pos = [None] * deg
    for t, p in enumerate(pos):
        at_pos[p] = t
    inv = pres.inverses

    ray_idx = []
    on = np.zeros(ball.n, dtype=bool)
    for ray in rays:
        if ray.vertices[0].normal_form != ():
            raise ValueError("rays must start at o")
        k_max = min(len(ray), ball.radius)
        idx = [ball.index_of(v) for v in ray.vertices[:k_max + 1]]
        if np.any(on[idx[1:]]):
            raise ValueError("rays overlap outside o")
        on[idx] = True
        ray_idx.append(tuple(idx))

    # cyclic order of the rays at o decides which sector each side faces
    outs = [pos[ray.letter(0)] for ray in rays]
    if len(set(outs)) != 3:
        raise ValueError("rays leave o along the same edge")
    nxt = {}
    for i in range(3):
        nxt[i] = min((j for j in range(3) if j != i), key=lambda j: (outs[j] - outs[i]) % deg)
    prv = {nxt[i]: i for i in range(3)}

    seeds = []  # (vertex, sector code)
    o_out = {outs[i]: i for i in range(3)}
    for p in range(deg):
        if p in o_out:
            continue
        # sector at o: between the last ray passed going backward and the next one forward
        back = min(range(3), key=lambda i: (p - outs[i]) % deg)
        seeds.append((int(ball.nbr[0, at_pos[p]]), _sector_code(back, nxt[back])))
    for i, ray in enumerate(rays):
        fwd, bwd = _sector_code(i, nxt[i]), _sector_code(prv[i], i)
        for k in range(1, len(ray_idx[i])):
            v = ray_idx[i][k]
            p_out = pos[ray.letter(k)]
            p_back = pos[inv[ray.letter(k - 1)]]
            span = (p_back - p_out) % deg
            for t in range(deg):
                w = int(ball.nbr[v, t])
                if w < 0 or on[w]:
                    continue
                off = (pos[t] - p_out) % deg
                seeds.append((w, fwd if 0 < off < span else bwd))

    src, gen, dst = ball.edges()
    keep = ~on[src] & ~on[dst]
    adj = csr_matrix((np.ones(keep.sum(), dtype=np.int8), (src[keep], dst[keep])),
                     shape=(ball.n, ball.n))
    _, comp = connected_components(adj, directed=False)
    comp_code = {}
    for w, code in seeds:
        c = comp[w]
        if comp_code.setdefault(c, code) != code:
            raise RuntimeError("sector components touch both sides of a ray")
    assignment = np.zeros(ball.n, dtype=np.int8)
    codes = np.zeros(comp.max() + 1, dtype=np.int8)
    for c, code in comp_code.items():
        codes[c] = code
    assignment[~on] = codes[comp[~on]]
    if np.any(assignment[~on] == 0):
        raise RuntimeError("ball vertices not reachable from any ray side")
    return SectorPartition(assignment, tuple(ray_idx))


def sphere_intersection_count(ball, x, n, target):
    """|S(x, n) ∩ target| for a collection of GroupElements."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    ball.index_of(x)
    if len(x) + n > ball.radius:
        raise ValueError(f"sphere S(x,{n}) exceeds the radius-{ball.radius} ball")
    g = ball.group
    sx = g.state_of_element(x)
    return sum(1 for y in set(target) if g.distance(sx, g.state_of_element(y)) == n)


def fit_linear_envelope(ns, counts):
    """Envelope constant C2 = max count/n and the least-squares slope through 0."""
    ns = np.asarray(ns, dtype=float)
    cs = np.asarray(counts, dtype=float)
    m = ns > 0
    ns, cs = ns[m], cs[m]
    if len(ns) == 0:
        raise ValueError("need at least one positive n")
    return {"C2": float((cs / ns).max()), "slope": float((ns @ cs) / (ns @ ns))}

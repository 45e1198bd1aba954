"""
Galton-Watson and unimodular Galton-Watson family trees, tree-indexed random
walks, and traces.
"""

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_POPULATION_CAP = 1_000_000


class PopulationCapExceeded(RuntimeError):
    def __init__(self, generation, size, cap):
        super().__init__(f"population cap {cap} exceeded in generation {generation} ({size})")
        self.generation = generation


@dataclass(frozen=True)
class OffspringLaw:
    """Finite-support offspring distribution mu."""

    probabilities: tuple     # ((k, mu_k), ...) sorted by k

    def __init__(self, probabilities):
        items = sorted((int(k), float(p)) for k, p in dict(probabilities).items() if p != 0)
        if not items:
            raise ValueError("empty offspring law")
        if any(k < 0 for k, _ in items) or any(p < 0 for _, p in items):
            raise ValueError("offspring law needs nonnegative counts and probabilities")
        total = math.fsum(p for _, p in items)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"offspring probabilities sum to {total!r}")
        object.__setattr__(self, "probabilities", tuple(items))

    @property
    def support(self):
        return np.array([k for k, _ in self.probabilities])

    @property
    def pmf(self):
        return np.array([p for _, p in self.probabilities])

    @property
    def mean(self):
        return math.fsum(k * p for k, p in self.probabilities)

    def mu(self, k):
        return dict(self.probabilities).get(k, 0.0)

    def check_supercritical(self):
        """mu_0 = 0, mu_1 > 0 and m > 1, as needed for the trace results."""
        if self.mu(0) > 0:
            raise ValueError("mu_0 must be 0")
        if self.mu(1) <= 0:
            raise ValueError("mu_1 must be positive")
        if self.mean <= 1:
            raise ValueError(f"mean {self.mean} is not supercritical")
        return self

    def ugw_root_law(self):
        """Law of the root degree D: P(D = k+1) proportional to mu_k / (k+1)."""
        w = [(k + 1, p / (k + 1)) for k, p in self.probabilities]
        z = math.fsum(x for _, x in w)
        return {d: x / z for d, x in w}

    def to_dict(self):
        return {str(k): p for k, p in self.probabilities}

    @classmethod
    def with_mean(cls, m):
        """A two-point law on {1, K} with mean m (K = 2 when m < 2)."""
        if m <= 1:
            raise ValueError("only m > 1 is realizable with mu_0 = 0 and mu_1 > 0")
        K = 2 if m < 2 else math.ceil(m) + 1
        pk = (m - 1) / (K - 1)
        return cls({1: 1 - pk, K: pk})


@dataclass(eq=False)
class FamilyTree:
    """Vertices in generation order; children of a vertex are contiguous."""

    parent: np.ndarray       # parent[0] = -1
    generation: np.ndarray
    flavor: str
    gen_offsets: np.ndarray  # vertices of generation g are gen_offsets[g]:gen_offsets[g+1]

    @property
    def n(self):
        return len(self.parent)

    @property
    def depth(self):
        return len(self.gen_offsets) - 2

    def generation_sizes(self):
        return np.diff(self.gen_offsets)

    def child_counts(self):
        return np.bincount(self.parent[1:], minlength=self.n)

    def degrees(self):
        d = self.child_counts()
        d[1:] += 1
        return d


def _grow(first_counts, law, depth, rng, cap, flavor):
    sup, pmf = law.support, law.pmf
    parents = [np.array([-1])]
    offsets = [0, 1]
    level = np.array([0])
    n = 1
    for g in range(1, depth + 1):
        counts = first_counts if g == 1 else rng.choice(sup, size=len(level), p=pmf)
        size = int(counts.sum())
        if n + size > cap:
            raise PopulationCapExceeded(g, n + size, cap)
        parents.append(np.repeat(level, counts))
        level = np.arange(n, n + size)
        n += size
        offsets.append(n)
    parent = np.concatenate(parents).astype(np.int64)
    gens = np.repeat(np.arange(depth + 1), np.diff(offsets)).astype(np.int32)
    return FamilyTree(parent, gens, flavor, np.asarray(offsets))


def sample_gw_tree(law, depth, rng, cap=DEFAULT_POPULATION_CAP):
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if depth == 0:
        return FamilyTree(np.array([-1]), np.array([0], dtype=np.int32), "GW", np.array([0, 1]))
    first = rng.choice(law.support, size=1, p=law.pmf)
    return _grow(first, law, depth, rng, cap, "GW")


def sample_ugw_tree(law, depth, rng, cap=DEFAULT_POPULATION_CAP):
    if depth < 1:
        raise ValueError("UGW trees need depth at least 1")
    root = law.ugw_root_law()
    ds = np.array(sorted(root))
    first = rng.choice(ds, size=1, p=[root[d] for d in ds])
    return _grow(first, law, depth, rng, cap, "UGW")


def sample_tree(law, depth, rng, flavor="UGW", cap=DEFAULT_POPULATION_CAP):
    if flavor == "UGW":
        return sample_ugw_tree(law, depth, rng, cap)
    if flavor == "GW":
        return sample_gw_tree(law, depth, rng, cap)
    raise ValueError(f"unknown tree flavor {flavor!r}")


# ---------------------------------------------------------------------------
# tree-indexed walks


@dataclass(eq=False)
class BRWRun:
    tree: FamilyTree
    labels: np.ndarray       # label of the edge into each vertex; rank means identity
    states: list             # solver state of every particle position
    start: object
    group: object = field(repr=False)

    @property
    def identity_label(self):
        return self.group.rank

    def position(self, v):
        return self.group.element(self.states[v])

    def positions(self):
        return [self.group.element(s) for s in self.states]


def run_tree_indexed_walk(tree, q, start, rng, group):
    """Label each tree edge i.i.d. from q and carry positions down the tree."""
    k = group.rank
    probs = np.append(q.q_gen, q.q_e)
    labels = np.full(tree.n, k, dtype=np.int64)
    if tree.n > 1:
        labels[1:] = rng.choice(k + 1, size=tree.n - 1, p=probs)
    if isinstance(start, tuple) and not hasattr(start, "normal_form"):
        s0 = start
    else:
        s0 = group.state_of_element(start) if hasattr(start, "normal_form") else group.state_of(start)
    states = [s0] * tree.n
    step = group.step
    par = tree.parent.tolist()
    lab = labels.tolist()
    for v in range(1, tree.n):
        s = states[par[v]]
        t = lab[v]
        states[v] = s if t == k else step(s, t)
    return BRWRun(tree, labels, states, s0, group)


@dataclass(eq=False)
class Trace:
    """Visited vertices (solver states), traversed Cayley edges and visit counts."""

    states: list
    index: dict = field(repr=False)
    edges: np.ndarray        # (E, 2) vertex-index pairs, i < j, unique
    edge_labels: np.ndarray  # generator carrying edges[:,0] to edges[:,1]
    multiplicity: np.ndarray
    distance: np.ndarray     # |x| for every vertex
    frontier: np.ndarray     # bool: holds a particle of the last generation
    group: object = field(repr=False)
    start: int = 0

    @property
    def n(self):
        return len(self.states)

    def elements(self):
        return [self.group.element(s) for s in self.states]

    def adjacency(self):
        from scipy.sparse import csr_matrix

        e = self.edges
        data = np.ones(2 * len(e), dtype=np.int8)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        return csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def neighbors(self):
        out = [[] for _ in range(self.n)]
        for a, b in self.edges.tolist():
            out[a].append(b)
            out[b].append(a)
        return out


def make_trace(group, states, edge_pairs, multiplicity=None, frontier=None, start_state=None):
    """Build a Trace from explicit states and undirected (state, generator, state) triples."""
    index = {}
    for s in states:
        index.setdefault(s, len(index))
    uniq = list(index)
    es, ls = set(), {}
    for a, t, b in edge_pairs:
        i, j = index[a], index[b]
        if i == j:
            continue
        if i > j:
            i, j, t = j, i, group.inverses[t]
        if (i, j) not in es:
            es.add((i, j))
            ls[(i, j)] = t
    pairs = sorted(es)
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    labels = np.array([ls[p] for p in pairs], dtype=np.int64)
    mult = np.ones(len(uniq), dtype=np.int64) if multiplicity is None else np.asarray(multiplicity)
    front = np.zeros(len(uniq), dtype=bool) if frontier is None else np.asarray(frontier)
    dist = np.array([group.length(s) for s in uniq], dtype=np.int64)
    start = index[start_state if start_state is not None else uniq[0]]
    return Trace(uniq, index, edges, labels, mult, dist, front, group, start)


def extract_trace(run):
    """Visited vertices, traversed non-identity edges, and particle visit counts."""
    tree, states = run.tree, run.states
    index = {}
    ids = np.empty(tree.n, dtype=np.int64)
    for v, s in enumerate(states):
        ids[v] = index.setdefault(s, len(index))
    mult = np.bincount(ids, minlength=len(index))
    k = run.identity_label
    move = run.labels[1:] != k
    child = np.arange(1, tree.n)[move]
    a, b = ids[tree.parent[child]], ids[child]
    lab = run.labels[child]
    inv = np.asarray(run.group.inverses)
    swap = a > b
    lab = np.where(swap, inv[lab], lab)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    if len(lo):
        key = lo * len(index) + hi
        _, first = np.unique(key, return_index=True)
        edges = np.stack([lo[first], hi[first]], axis=1)
        labels = lab[first]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
        labels = np.zeros(0, dtype=np.int64)
    front = np.zeros(len(index), dtype=bool)
    last = tree.gen_offsets[-2]
    front[ids[last:]] = True
    uniq = list(index)
    dist = np.array([run.group.length(s) for s in uniq], dtype=np.int64)
    return Trace(uniq, index, edges, labels, mult, dist, front, run.group, int(ids[0]))


# ---------------------------------------------------------------------------
# regimes and occupancy


@dataclass(frozen=True)
class RegimeVerdict:
    regime: str              # "transient" or "recurrent"
    m_rho: float
    critical: bool
    margin: float


def classify_regime(m, rho, uncertainty=0.0, margin=None):
    """Transient iff m * rho <= 1; the critical flag marks |m rho - 1| within the margin."""
    if m <= 1:
        raise ValueError("m must exceed 1")
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    mr = m * rho
    if margin is None:
        margin = max(m * uncertainty, 1e-12)
    regime = "transient" if mr <= 1 else "recurrent"
    return RegimeVerdict(regime, mr, abs(mr - 1) < margin or mr == 1, margin)


@dataclass
class OccupancyTable:
    counts: np.ndarray       # (runs, depth+1) particles inside the target per generation
    depth: int

    @property
    def mean(self):
        return self.counts.mean(axis=0)

    def last_visit(self):
        """Last generation with a particle in the target, -1 if never."""
        hit = self.counts > 0
        any_hit = hit.any(axis=1)
        last = self.depth - np.argmax(hit[:, ::-1], axis=1)
        return np.where(any_hit, last, -1)

    def empty_tail(self, window):
        """Per run: no particle in the target during the last `window` generations."""
        return self.counts[:, self.depth - window + 1:].sum(axis=1) == 0

    def to_rows(self):
        return [{"generation": g, "mean_occupancy": float(m)} for g, m in enumerate(self.mean)]


def visit_profile(runs, target_set):
    """Per-generation counts of particles inside `target_set` (solver states)."""
    target = set(target_set)
    if not runs:
        return OccupancyTable(np.zeros((0, 1), dtype=np.int64), 0)
    depth = max(r.tree.depth for r in runs)
    out = np.zeros((len(runs), depth + 1), dtype=np.int64)
    for i, run in enumerate(runs):
        if not target:
            continue
        inside = np.fromiter((s in target for s in run.states), dtype=bool, count=run.tree.n)
        out[i, :run.tree.depth + 1] = np.bincount(run.tree.generation[inside],
                                                  minlength=run.tree.depth + 1)
    return OccupancyTable(out, depth)


def occupancy_verdict(table, window=10):
    """Observed regime per run: an empty target over the last `window` generations reads transient."""
    return np.where(table.empty_tail(window), "transient", "recurrent")

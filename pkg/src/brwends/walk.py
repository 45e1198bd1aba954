"""
Random-walk quantities on balls: n-step laws, spectral radius, Green functions,
exponential decay fits and Ancona ratios.

The kernel acts on a ball B by p(x, xs) = q(s), with mass that leaves B killed.
Since q is symmetric the killed kernel P_B is a symmetric operator, so
p_B^(n)(x,y) <= rho_B^n with rho_B its top eigenvalue, and rho_B <= rho.

A killed quantity equals the true one whenever every contributing path stays
inside B.  A length-n path from x to y never gets further than
(|x| + |y| + n) / 2 from o, which is the exactness test used throughout.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from brwends.ball import build_ball
from brwends.group import make_group

log = logging.getLogger(__name__)

TOL = {
    "weights_sum": 1e-12,
    "mass": 1e-10,
    "power_residual": 1e-10,
    "eigsh": 1e-10,
    "cg": 1e-12,
}


class BallTooSmall(ValueError):
    pass


# ---------------------------------------------------------------------------
# driving measure


@dataclass(frozen=True)
class DrivingMeasure:
    presentation: object
    weights: tuple           # q(s) per generator index
    identity_weight: float   # q(e)

    @property
    def q_gen(self):
        return np.asarray(self.weights, dtype=float)

    @property
    def q_e(self):
        return float(self.identity_weight)

    def return_probability_2(self):
        """p^(2)(e,e) = sum_g q(g)^2."""
        return self.q_e ** 2 + float(np.sum(self.q_gen ** 2))

    def to_dict(self):
        d = {self.presentation.generators[i]: w for i, w in enumerate(self.weights)}
        d["e"] = self.identity_weight
        return d


def validate_driving_measure(presentation, weights, require_lazy=True):
    """Check symmetry, full support on S ∪ {e}, and normalization.

    ``require_lazy=False`` admits q(e) = 0 for the calibration walks whose
    closed forms assume a non-lazy step.
    """
    w = dict(weights)
    unknown = set(w) - set(presentation.generators) - {"e"}
    if unknown:
        raise ValueError(f"unknown symbols in driving measure: {sorted(unknown)}")
    qg = tuple(float(w.get(s, 0.0)) for s in presentation.generators)
    qe = float(w.get("e", 0.0))
    if any(x < 0 for x in qg) or qe < 0:
        raise ValueError("negative weight")
    total = math.fsum(qg) + qe
    if abs(total - 1.0) > TOL["weights_sum"]:
        raise ValueError(f"weights sum to {total!r}, not 1")
    for i, s in enumerate(presentation.generators):
        if abs(qg[i] - qg[presentation.inverse(i)]) > TOL["weights_sum"]:
            raise ValueError(f"asymmetric: q({s}) != q({s.swapcase()})")
    if any(x == 0 for x in qg):
        raise ValueError("support must contain every generator")
    if require_lazy and qe == 0:
        raise ValueError("support must include the identity e")
    return DrivingMeasure(presentation, qg, qe)


def uniform_measure(presentation, lazy=None):
    """Uniform on S ∪ {e} by default; `lazy` fixes q(e) with the rest uniform on S."""
    k = presentation.rank
    if lazy is None:
        lazy = 1.0 / (k + 1)
    weights = {s: (1.0 - lazy) / k for s in presentation.generators}
    weights["e"] = lazy
    return validate_driving_measure(presentation, weights, require_lazy=lazy > 0)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _apply(nbr, qg, qe, v, out):
    n, k = nbr.shape
    for x in range(n):
        s = qe * v[x]
        for t in range(k):
            j = nbr[x, t]
            if j >= 0:
                s += qg[t] * v[j]
        out[x] = s


@njit(cache=True)
def _apply_shifted(nbr, qg, qe, r, v, out):
    """out = (I - r P_B) v."""
    n, k = nbr.shape
    for x in range(n):
        s = qe * v[x]
        for t in range(k):
            j = nbr[x, t]
            if j >= 0:
                s += qg[t] * v[j]
        out[x] = v[x] - r * s


@njit(cache=True)
def _kahan_add(acc, comp, v, c):
    for i in range(v.shape[0]):
        y = c * v[i] - comp[i]
        t = acc[i] + y
        comp[i] = (t - acc[i]) - y
        acc[i] = t


def apply_kernel(ball, q, v, out=None):
    if out is None:
        out = np.empty_like(v)
    _apply(ball.nbr, q.q_gen, q.q_e, v, out)
    return out


def _delta(ball, i):
    v = np.zeros(ball.n)
    v[i] = 1.0
    return v


@dataclass
class DistributionVector:
    ball: object = field(repr=False)
    n: int
    mass: np.ndarray = field(repr=False)

    def __getitem__(self, x):
        return float(self.mass[self.ball.index_of(x)])

    def total(self):
        return math.fsum(self.mass)

    def support(self):
        idx = np.nonzero(self.mass)[0]
        return {self.ball.element(i): float(self.mass[i]) for i in idx}


def _index(ball, x):
    return ball.index_of(x) if not isinstance(x, (int, np.integer)) else int(x)


def n_step_distribution(ball, x, n, q):
    """Exact p^(n)(x, .) on the ball; refuses if any mass could leave."""
    i = _index(ball, x)
    if ball.dist[i] + n > ball.radius:
        raise BallTooSmall(f"need radius >= {ball.dist[i] + n}, ball has {ball.radius}")
    v = _delta(ball, i)
    w = np.empty_like(v)
    for _ in range(n):
        _apply(ball.nbr, q.q_gen, q.q_e, v, w)
        v, w = w, v
    return DistributionVector(ball, n, v)


# ---------------------------------------------------------------------------
# spectral radius


@dataclass
class SpectralRadiusEstimate:
    lower_bound: float       # top eigenvalue of P_B
    estimate: float          # extrapolated to infinite radius
    mc_estimate: float       # (p^(2n)(e,e))^(1/2n)
    mc_stderr: float         # spread between root and ratio estimates
    ball_radius: int
    iterations: int
    radii: tuple = ()
    lower_bounds: tuple = ()
    method: str = "lanczos"

    @property
    def R_hat(self):
        return 1.0 / self.estimate

    @property
    def uncertainty(self):
        return max(self.estimate - self.lower_bound, self.mc_stderr, 0.0)

    def to_dict(self):
        return {"lower_bound": self.lower_bound, "estimate": self.estimate,
                "mc_estimate": self.mc_estimate, "mc_stderr": self.mc_stderr,
                "ball_radius": self.ball_radius, "iterations": self.iterations,
                "radii": list(self.radii), "lower_bounds": list(self.lower_bounds),
                "R_hat": self.R_hat, "method": self.method}


class ConvergenceError(RuntimeError):
    pass


def top_eigenvalue(ball, q, method="lanczos", max_iter=200_000, tol=None):
    """Largest eigenvalue of the killed kernel P_B and the iteration count."""
    n = ball.n
    if n == 1:
        return q.q_e, 0
    if method == "lanczos":
        counter = [0]
        out = np.empty(n)

        def mv(v):
            counter[0] += 1
            _apply(ball.nbr, q.q_gen, q.q_e, np.ascontiguousarray(v.ravel()), out)
            return out.copy()

        op = LinearOperator((n, n), matvec=mv, dtype=float)
        v0 = np.ones(n)
        vals = eigsh(op, k=1, which="LA", v0=v0, tol=tol or TOL["eigsh"],
                     ncv=min(n - 1, 24), maxiter=max_iter, return_eigenvectors=False)
        return float(vals[0]), counter[0]
    if method == "power":
        # shift by +1 so the top of the spectrum dominates (bipartite balls have -lambda too)
        tol = tol or TOL["power_residual"]
        v = np.ones(n) / math.sqrt(n)
        w = np.empty(n)
        lam = 0.0
        for it in range(1, max_iter + 1):
            _apply(ball.nbr, q.q_gen, q.q_e, v, w)
            lam = float(v @ w)
            res = float(np.linalg.norm(w - lam * v))
            if res < tol:
                return lam, it
            w += v
            v = w / np.linalg.norm(w)
        raise ConvergenceError(f"power iteration residual {res:.3g} after {max_iter} steps")
    raise ValueError(f"unknown eigen method {method!r}")


def extrapolate_radius(radii, values):
    """Fit lambda(R) = rho - c / (R + b)^2 through three (radius, value) points."""
    (r1, r2, r3), (l1, l2, l3) = radii, values
    if not (l1 < l2 < l3):
        return l3
    target = (l2 - l1) / (l3 - l2)

    def g(b):
        a1, a2, a3 = 1 / (r1 + b) ** 2, 1 / (r2 + b) ** 2, 1 / (r3 + b) ** 2
        return (a1 - a2) / (a2 - a3) - target

    lo, hi = -min(radii) + 1e-6, 1e4
    if g(lo) * g(hi) > 0:
        return l3
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(lo) * g(mid) <= 0:
            hi = mid
        else:
            lo = mid
    b = 0.5 * (lo + hi)
    c = (l3 - l2) / (1 / (r2 + b) ** 2 - 1 / (r3 + b) ** 2)
    return l3 + c / (r3 + b) ** 2


def return_probabilities(ball, q, steps):
    """p^(n)(e,e) for n = 0..steps, exact while steps <= 2 * radius."""
    if steps > 2 * ball.radius:
        raise BallTooSmall(f"{steps} steps need radius >= {(steps + 1) // 2}")
    v = _delta(ball, 0)
    w = np.empty_like(v)
    out = [1.0]
    for _ in range(steps):
        _apply(ball.nbr, q.q_gen, q.q_e, v, w)
        v, w = w, v
        out.append(float(v[0]))
    return out


def estimate_spectral_radius(presentation, q, ball_radius, method="lanczos", ball=None):
    """Truncated top eigenvalue, its radius extrapolation, and a return-probability root."""
    if ball_radius < 2:
        raise ValueError("ball_radius must be at least 2")
    if ball is None:
        ball = build_ball(make_group(presentation), ball_radius)
    radii = tuple(r for r in (ball_radius - 4, ball_radius - 2, ball_radius) if r >= 1)
    lows, iters = [], 0
    for r in radii:
        lam, it = top_eigenvalue(ball.restrict(r) if r < ball.radius else ball, q, method)
        lows.append(lam)
        iters += it
    est = extrapolate_radius(radii, lows) if len(radii) == 3 else lows[-1]
    est = min(max(est, lows[-1]), 1.0)
    ret = return_probabilities(ball, q, 2 * ball_radius)
    n2 = 2 * ball_radius
    root = ret[n2] ** (1.0 / n2)
    ratio = math.sqrt(ret[n2] / ret[n2 - 2])
    return SpectralRadiusEstimate(lows[-1], est, root, abs(ratio - root), ball_radius, iters,
                                  radii, tuple(lows), method)


# ---------------------------------------------------------------------------
# Green functions


@dataclass
class GreenEstimate:
    value: float
    N: object                # int, or None for the full killed series
    tail_bound: float        # math.inf flags an unbounded tail
    r: float
    exact: bool              # all paths of length <= N stay in the ball
    killed: bool = False

    @property
    def tail_unbounded(self):
        return math.isinf(self.tail_bound)


def tail_bound(r, rho_hat, N):
    x = r * rho_hat
    if x >= 1:
        return math.inf
    return x ** (N + 1) / (1 - x)


def green_sums(ball, x, rs, N, q):
    """Killed partial sums sum_{n<=N} p_B^(n)(x,.) r^n for every r in rs (one pass)."""
    i = _index(ball, x)
    rs = np.atleast_1d(np.asarray(rs, dtype=float))
    acc = np.zeros((len(rs), ball.n))
    comp = np.zeros_like(acc)
    v = _delta(ball, i)
    w = np.empty_like(v)
    for n in range(N + 1):
        if n:
            _apply(ball.nbr, q.q_gen, q.q_e, v, w)
            v, w = w, v
        for k, r in enumerate(rs):
            _kahan_add(acc[k], comp[k], v, r ** n)
    return acc


def green_solve(ball, x, r, q, tol=None):
    """Full killed Green function G_B,r(x,.) = (I - r P_B)^-1 delta_x by conjugate gradients."""
    if r <= 0:
        raise ValueError("r must be positive")
    i = _index(ball, x)
    n = ball.n
    out = np.empty(n)

    def mv(v):
        _apply_shifted(ball.nbr, q.q_gen, q.q_e, r, np.ascontiguousarray(v.ravel()), out)
        return out.copy()

    op = LinearOperator((n, n), matvec=mv, dtype=float)
    b = _delta(ball, i)
    sol, info = cg(op, b, rtol=tol or TOL["cg"], atol=0.0, maxiter=100_000)
    if info != 0:
        raise ConvergenceError(f"conjugate gradients did not converge (info={info}, r={r})")
    if sol.min() <= 0:
        # below 1/rho_B the Neumann series makes every entry positive
        raise ConvergenceError(f"r={r} is not below 1/rho_B: solution is not positive")
    return sol


def green_function(ball, x, y, r, N, q, rho_hat=None, killed=False):
    """G_r(x,y) truncated at N steps, with the geometric tail bound.

    Refuses unless every path of length <= N from x to y fits in the ball;
    ``killed=True`` instead returns the killed-walk partial sum (a lower bound).
    """
    if r <= 0:
        raise ValueError("r must be positive")
    i, j = _index(ball, x), _index(ball, y)
    exact = 2 * ball.radius >= int(ball.dist[i]) + int(ball.dist[j]) + N
    if not exact and not killed:
        raise BallTooSmall(
            f"N={N} from |x|={ball.dist[i]} to |y|={ball.dist[j]} needs radius "
            f">= {math.ceil((int(ball.dist[i]) + int(ball.dist[j]) + N) / 2)}")
    val = float(green_sums(ball, i, [r], N, q)[0, j])
    tb = math.inf if rho_hat is None else tail_bound(r, rho_hat, N)
    return GreenEstimate(val, N, tb, r, exact, killed=not exact)


def sphere_maxima(ball, values):
    """max over each sphere S(o,d) of a per-vertex array."""
    off = ball.sphere_offsets
    return np.array([values[off[d]:off[d + 1]].max() for d in range(ball.radius + 1)])


@dataclass
class VanishingTable:
    r: float
    maxima: list
    passed: bool

    def to_rows(self):
        return [{"distance": d, "max_green": m} for d, m in enumerate(self.maxima)]


def check_green_vanishing(ball, r, q, values=None, start=2):
    """Per-distance maxima of G_r(o,.); passes if strictly decreasing from `start` on."""
    g = green_solve(ball, 0, r, q) if values is None else values
    mx = sphere_maxima(ball, g)
    tail = mx[start:]
    ok = bool(np.all(np.diff(tail) < 0)) and mx[0] >= 1
    return VanishingTable(float(r), mx.tolist(), ok)


@dataclass
class DecayFit:
    C1_hat: float            # exp(intercept) of the least-squares line
    rho_hat_decay: float
    r_squared: float
    C1_envelope: float       # smallest C with G <= C rho^d at every fitted distance
    distances: list
    values: list

    def to_dict(self):
        return dict(self.__dict__)


def fit_decay_values(distances, values):
    d = np.asarray(distances, dtype=float)
    y = np.log(np.asarray(values, dtype=float))
    if len(set(distances)) < 5:
        raise ValueError("decay fit needs at least 5 distinct distances")
    A = np.vstack([np.ones_like(d), d]).T
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (a + b * d)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    rho = math.exp(b)
    env = float(np.max(np.exp(y) / rho ** d))
    return DecayFit(math.exp(a), rho, r2, env, [int(x) for x in distances],
                    [float(v) for v in values])


def fit_green_decay(ball, r, q, distances=None, values=None, pool="max"):
    """Least-squares fit of log G_r(o,x) against d(o,x), pooled per distance."""
    g = green_solve(ball, 0, r, q) if values is None else values
    if distances is None:
        distances = range(2, ball.radius + 1)
    off = ball.sphere_offsets
    pooled = []
    for d in distances:
        s = g[off[d]:off[d + 1]]
        pooled.append(s.max() if pool == "max" else s.mean())
    if min(pooled) <= 0:
        raise ValueError("zero Green values in the fitted range")
    return fit_decay_values(list(distances), pooled)


# ---------------------------------------------------------------------------
# Ancona


@dataclass
class AnconaReport:
    C_hat: float             # max of G(x,z) G(y,y) / (G(x,y) G(y,z))
    C_hat_raw: float         # max of G(x,z) / (G(x,y) G(y,z))
    per_r: list              # rows {r, max_ratio, max_raw}
    samples: int
    mode: str

    def spread(self):
        m = [row["max_ratio"] for row in self.per_r]
        return max(m) / min(m)


def sample_ancona_triples(ball, samples, rng, lo=None, hi=None, points=3):
    """Triples (o, y, z): z uniform on spheres |z| in [lo, hi], y evenly placed on the geodesic.

    Returned as vertex indices (x, y, z, y^-1 z).
    """
    lo = math.ceil(ball.radius / 2) if lo is None else lo
    hi = int(0.8 * ball.radius) if hi is None else hi
    hi = max(hi, lo)
    off = ball.sphere_offsets
    out = []
    g = ball.group
    for _ in range(samples):
        d = int(rng.integers(lo, hi + 1))
        z = int(rng.integers(off[d], off[d + 1]))
        word = ball.word(z)
        for p in range(1, points + 1):
            k = round(p * d / (points + 1))
            y = ball.walk(0, word[:k])
            rel = ball.walk(0, g.normal_form(g.state_of(word[k:])))
            out.append((0, y, z, rel))
    return out


def check_ancona(ball, r_grid, q, samples, rng, mode="translate", points=3):
    """Maximum Ancona ratio over sampled on-geodesic triples for each r in the grid.

    mode "translate" reads every Green value off the single vector G(o, .) via
    G(y, z) = G(o, y^-1 z); mode "direct" solves from each y instead, which keeps
    the killed walk's own first-passage structure intact.
    """
    triples = sample_ancona_triples(ball, samples, rng, points=points)
    rows = []
    best, best_raw = 0.0, 0.0
    for r in r_grid:
        g0 = green_solve(ball, 0, r, q)
        cache = {}
        mr, mraw = 0.0, 0.0
        for x, y, z, rel in triples:
            if mode == "translate":
                gyz, gyy = g0[rel], g0[0]
            else:
                if y not in cache:
                    cache[y] = green_solve(ball, y, r, q)
                gy = cache[y]
                gyz, gyy = gy[z], gy[y]
            raw = g0[z] / (g0[y] * gyz)
            mraw = max(mraw, raw)
            mr = max(mr, raw * gyy)
        rows.append({"r": float(r), "max_ratio": mr, "max_raw": mraw})
        best, best_raw = max(best, mr), max(best_raw, mraw)
    return AnconaReport(best, best_raw, rows, len(triples), mode)


# ---------------------------------------------------------------------------
# free-group closed forms (used as oracles)


def free_rho(q):
    """Spectral radius of an isotropic walk on the free group of rank k/2."""
    k = len(q.weights)
    beta = q.weights[0]
    return q.q_e + 2 * beta * math.sqrt(k - 1)


def free_first_passage(q, r):
    """F_r = sum_n r^n P[first visit to a at time n] for the isotropic tree walk."""
    k = len(q.weights)
    a, b = q.q_e, q.weights[0]
    # F = r b + r a F + (k-1) r b F^2, smaller root
    A, B, C = (k - 1) * r * b, r * a - 1, r * b
    disc = B * B - 4 * A * C
    if disc < 0:
        raise ValueError("r beyond the radius of convergence")
    return (-B - math.sqrt(disc)) / (2 * A)


def free_green(q, r, distance):
    k = len(q.weights)
    F = free_first_passage(q, r)
    G0 = 1.0 / (1 - r * q.q_e - k * r * q.weights[0] * F)
    return G0 * F ** distance


def tail_sum(C1, C2, rho, K):
    """sum_{n >= K} C1 C2 n rho^n in closed form."""
    return C1 * C2 * rho ** K * (K * (1 - rho) + rho) / (1 - rho) ** 2


__all__ = [
    "DrivingMeasure", "validate_driving_measure", "uniform_measure", "apply_kernel",
    "DistributionVector", "n_step_distribution", "SpectralRadiusEstimate",
    "estimate_spectral_radius", "top_eigenvalue", "extrapolate_radius", "return_probabilities",
    "GreenEstimate", "green_function", "green_sums", "green_solve", "tail_bound",
    "check_green_vanishing", "VanishingTable", "DecayFit", "fit_green_decay",
    "fit_decay_values", "AnconaReport", "check_ancona", "sample_ancona_triples",
    "free_rho", "free_first_passage", "free_green", "tail_sum", "BallTooSmall",
]

"""
Exact arithmetic for the genus-2 surface group <a,b,c,d | abABcdCD>.

The Cayley graph of this presentation is the dual graph of the tiling of the
hyperbolic plane by regular octagons with interior angles pi/4.  The same
tiling is the chamber system of the Coxeter group W generated by the
reflections s_0..s_7 in the octagon sides, with (s_i s_{i+1})^4 = 1 and no
relation between non-adjacent sides.  So word length in the surface group is
Coxeter length in W, and Coxeter length is decided exactly by root signs.

A surface-group element g is stored as

    (u_0, ..., u_7, rot, flip, length)

where u = w^-1 . f0 is the contragredient image of a chamber point, w is the
unique element of W with wD = gD, and (rot, flip) encodes the octagon symmetry
h = w^-1 g acting on side indices by i -> rot + (-1)^flip * i.  Each u_i lives
in Z[sqrt 2] and is stored as an integer pair (a, b) meaning a + b*sqrt(2),
flattened into the tuple, so the whole state is a tuple of 19 Python ints.
The map g -> u is injective, so the tuple is a canonical key.
"""

import numpy as np

SYMBOLS = ("a", "b", "c", "d", "A", "B", "C", "D")

# Side of the base octagon crossed by each generator.  Read in side order this
# is the rotation (a, B, A, b, c, D, C, d) at every vertex of the Cayley graph.
SIDE_OF = {"a": 0, "B": 1, "A": 2, "b": 3, "c": 4, "D": 5, "C": 6, "d": 7}
ROTATION = ("a", "B", "A", "b", "c", "D", "C", "d")

NSIDES = 8
STATE_LEN = 2 * NSIDES + 3

_ROOT = tuple([1, 0] * NSIDES)
IDENTITY = _ROOT + (0, 0, 0)


def _inv(sym):
    return sym.swapcase()


# per generator (in SYMBOLS order): side index and reflection constant of k_t
_SIDE = tuple(SIDE_OF[s] for s in SYMBOLS)
_PAIR = tuple(SIDE_OF[s] + SIDE_OF[_inv(s)] for s in SYMBOLS)


def sign_z2(a, b):
    """Sign of a + b*sqrt(2) for integers a, b."""
    if a >= 0 and b >= 0:
        return 1 if (a or b) else 0
    if a <= 0 and b <= 0:
        return -1
    if a * a > 2 * b * b:
        return 1 if a > 0 else -1
    return 1 if b > 0 else -1


def reflect(u, j):
    """Apply s_j to the flattened Z[sqrt2] vector u (tuple of 16 ints)."""
    aj = u[2 * j]
    bj = u[2 * j + 1]
    out = list(u)
    for i in range(NSIDES):
        d = (i - j) % NSIDES
        if d == 0:
            out[2 * i] = -aj
            out[2 * i + 1] = -bj
        elif d == 1 or d == NSIDES - 1:
            # -2B = sqrt2: adds sqrt2*(aj + bj sqrt2)
            out[2 * i] += 2 * bj
            out[2 * i + 1] += aj
        else:
            # -2B = 2 for non-adjacent sides (Tits form, m = infinity)
            out[2 * i] += 2 * aj
            out[2 * i + 1] += 2 * bj
    return tuple(out)


def step(state, t):
    """Right-multiply the element `state` by generator index t (SYMBOLS order)."""
    rot = state[16]
    flip = state[17]
    sig = _SIDE[t]
    j = (rot + sig) % NSIDES if flip == 0 else (rot - sig) % NSIDES
    up = sign_z2(state[2 * j], state[2 * j + 1]) > 0
    u = reflect(state[:16], j)
    c = _PAIR[t]
    if flip == 0:
        rot, flip = (rot + c) % NSIDES, 1
    else:
        rot, flip = (rot - c) % NSIDES, 0
    return u + (rot, flip, state[18] + (1 if up else -1))


def length(state):
    return state[18]


def goes_up(state, t):
    """True iff right-multiplying by generator t increases word length."""
    rot = state[16]
    sig = _SIDE[t]
    j = (rot + sig) % NSIDES if state[17] == 0 else (rot - sig) % NSIDES
    return sign_z2(state[2 * j], state[2 * j + 1]) > 0


# ---------------------------------------------------------------------------
# vectorized variant for ball construction (int64, guarded against overflow)

_INT_GUARD = 1 << 30


def step_array(U, rot, flip, t):
    """Vectorized `step` on arrays U (n,16) int64, rot (n,), flip (n,).

    Returns (U', rot', flip', up) where `up` marks length increases.
    """
    n = U.shape[0]
    if n and np.abs(U).max() >= _INT_GUARD:
        raise OverflowError("tiling state entries exceed the int64-safe range")
    sig = _SIDE[t]
    j = np.where(flip == 0, rot + sig, rot - sig) % NSIDES
    rows = np.arange(n)
    aj = U[rows, 2 * j]
    bj = U[rows, 2 * j + 1]
    up = _sign_array(aj, bj) > 0
    out = U.copy()
    for i in range(NSIDES):
        d = (i - j) % NSIDES
        same = d == 0
        adj = (d == 1) | (d == NSIDES - 1)
        da = np.where(adj, 2 * bj, 2 * aj)
        db = np.where(adj, aj, 2 * bj)
        out[:, 2 * i] = np.where(same, -aj, U[:, 2 * i] + da)
        out[:, 2 * i + 1] = np.where(same, -bj, U[:, 2 * i + 1] + db)
    c = _PAIR[t]
    new_rot = np.where(flip == 0, rot + c, rot - c) % NSIDES
    new_flip = 1 - flip
    return out, new_rot.astype(rot.dtype), new_flip.astype(flip.dtype), up


def _sign_array(a, b):
    pos = (a >= 0) & (b >= 0)
    neg = (a <= 0) & (b <= 0)
    big_a = a * a > 2 * b * b
    mixed = np.where(big_a, np.sign(a), np.sign(b))
    return np.where(pos, 1, np.where(neg, -1, mixed))


def identity_arrays():
    U = np.array([_ROOT], dtype=np.int64)
    return U, np.zeros(1, dtype=np.int8), np.zeros(1, dtype=np.int8)


def state_from_arrays(U_row, rot, flip, ell):
    return tuple(int(x) for x in U_row) + (int(rot), int(flip), int(ell))

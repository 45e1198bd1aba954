"""
Group presentations, words and canonical forms.

Generators are single characters; the inverse of a generator is its swapped
case ("A" is a^-1).  Words are tuples of generator indices into
`GroupPresentation.generators`, whose order is the lexicographic order used
for shortlex normal forms and for every tie-break in the package.

Three solvers implement the same `Group` interface:

* `FreeGroup`    free reduction (no relators),
* `SurfaceGroup` exact octagon-tiling arithmetic (see `brwends.tiling`),
* `DehnGroup`    Dehn's algorithm plus bounded half-relator rewriting, for
                 C'(1/6) presentations.

Internally each solver works on hashable "states" that are cheap to step by a
generator; `GroupElement` is the user-facing wrapper around a normal form.
"""

from dataclasses import dataclass
from fractions import Fraction

from brwends import tiling


@dataclass(frozen=True)
class GroupPresentation:
    generators: tuple
    relators: tuple = ()
    planar_order: tuple = ()
    preset_tag: str = "custom"

    def __post_init__(self):
        gens = tuple(self.generators)
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "relators", tuple(self.relators))
        object.__setattr__(self, "planar_order", tuple(self.planar_order))
        if len(set(gens)) != len(gens):
            raise ValueError("duplicate generator symbols")
        for g in gens:
            if len(g) != 1 or not g.isalpha():
                raise ValueError(f"generator symbols are single letters, got {g!r}")
            if g.swapcase() not in gens:
                raise ValueError(f"generator list lacks the inverse of {g!r}")
        index = {g: i for i, g in enumerate(gens)}
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_inverse", tuple(index[g.swapcase()] for g in gens))
        for rel in self.relators:
            w = self.parse(rel)
            if not w:
                raise ValueError("relators must be nonempty")
            if free_reduce(w, self._inverse) != w or (len(w) > 1 and w[0] == self._inverse[w[-1]]):
                raise ValueError(f"relator {rel!r} is not cyclically reduced")
        if self.planar_order:
            if sorted(self.planar_order) != sorted(gens):
                raise ValueError("planar_order must be a permutation of the generators")
        if self.preset_tag not in ("free_rank2", "surface_genus2", "custom"):
            raise ValueError(f"unknown preset tag {self.preset_tag!r}")

    @property
    def rank(self):
        return len(self.generators)

    def index(self, symbol):
        try:
            return self._index[symbol]
        except KeyError:
            raise ValueError(f"unknown generator symbol {symbol!r}") from None

    def inverse(self, i):
        return self._inverse[i]

    @property
    def inverses(self):
        return self._inverse

    def parse(self, word):
        """Word given as a string of symbols or a sequence of symbols/indices."""
        if isinstance(word, str):
            return tuple(self.index(c) for c in word if c not in " .*e1")
        out = []
        for x in word:
            if isinstance(x, str):
                out.append(self.index(x))
            else:
                x = int(x)
                if not 0 <= x < self.rank:
                    raise ValueError(f"generator index {x} out of range")
                out.append(x)
        return tuple(out)

    def spell(self, word):
        return "".join(self.generators[i] for i in word) or "e"

    def invert(self, word):
        return tuple(self._inverse[i] for i in reversed(word))

    def rotation_positions(self):
        """Position of each generator index in the planar cyclic order."""
        if not self.planar_order:
            raise ValueError("presentation has no planar order")
        return tuple(self.planar_order.index(g) for g in self.generators)

    def to_dict(self):
        return {
            "generators": list(self.generators),
            "relators": list(self.relators),
            "planar_order": list(self.planar_order),
            "preset_tag": self.preset_tag,
        }


@dataclass(frozen=True, order=True)
class GroupElement:
    """A group element named by its canonical (shortlex) word."""

    normal_form: tuple = ()

    def __len__(self):
        return len(self.normal_form)

    def spell(self, presentation):
        return presentation.spell(self.normal_form)


def free_reduce(word, inverses):
    out = []
    for x in word:
        if out and out[-1] == inverses[x]:
            out.pop()
        else:
            out.append(x)
    return tuple(out)


# ---------------------------------------------------------------------------
# presets


def free_rank2():
    return GroupPresentation(("a", "b", "A", "B"), (), ("a", "b", "A", "B"), "free_rank2")


def surface_genus2():
    return GroupPresentation(tiling.SYMBOLS, ("abABcdCD",), tiling.ROTATION, "surface_genus2")


PRESETS = {"free_rank2": free_rank2, "surface_genus2": surface_genus2}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


# ---------------------------------------------------------------------------
# small cancellation


def cyclic_words(presentation):
    """All cyclic conjugates of the relators and their inverses (deduplicated)."""
    seen = []
    for rel in presentation.relators:
        w = presentation.parse(rel)
        for v in (w, presentation.invert(w)):
            for k in range(len(v)):
                c = v[k:] + v[:k]
                if c not in seen:
                    seen.append(c)
    return seen


def max_piece_ratio(presentation):
    """Largest |piece| / |relator| over all pieces (common prefixes of distinct cyclic words)."""
    words = cyclic_words(presentation)
    worst = Fraction(0)
    for i, u in enumerate(words):
        for v in words[i + 1:]:
            k = 0
            while k < min(len(u), len(v)) and u[k] == v[k]:
                k += 1
            if k:
                worst = max(worst, Fraction(k, min(len(u), len(v))))
    return worst


def satisfies_c_prime(presentation, lam=Fraction(1, 6)):
    return max_piece_ratio(presentation) < lam


def trace_faces(presentation):
    """Face boundary words traced by the planar rotation system.

    Arriving at a vertex along the edge labelled t^-1 (seen from that vertex),
    the face continues with the generator that follows t^-1 in the cyclic
    order.  For a consistent planar order every face word is a cyclic
    conjugate of a relator or of its inverse.
    """
    order = [presentation.index(g) for g in presentation.planar_order]
    k = len(order)
    succ = {order[i]: order[(i + 1) % k] for i in range(k)}
    darts = set(range(presentation.rank))
    faces = []
    while darts:
        start = min(darts)
        face = [start]
        darts.discard(start)
        t = succ[presentation.inverse(start)]
        while t != start:
            if len(face) > 4 * k * max(1, len(presentation.relators)) + 8:
                raise ValueError("rotation system does not close faces")
            face.append(t)
            darts.discard(t)
            t = succ[presentation.inverse(t)]
        faces.append(tuple(face))
    return faces


# ---------------------------------------------------------------------------
# solvers


class Group:
    """Common interface of the word-problem solvers."""

    def __init__(self, presentation):
        self.presentation = presentation
        self.rank = presentation.rank
        self.inverses = presentation.inverses

    identity = None

    def step(self, state, t):
        raise NotImplementedError

    def length(self, state):
        raise NotImplementedError

    def normal_form(self, state):
        raise NotImplementedError

    def geodesic_word(self, state):
        """Some geodesic word for `state` (cheaper than the normal form)."""
        return self.normal_form(state)

    def state_of(self, word):
        s = self.identity
        for t in self.presentation.parse(word):
            s = self.step(s, t)
        return s

    def state_of_element(self, element):
        return self.state_of(element.normal_form)

    def element(self, state):
        return GroupElement(self.normal_form(state))

    def canonicalize(self, word):
        return self.element(self.state_of(word))

    def multiply_word(self, state, word):
        for t in word:
            state = self.step(state, t)
        return state

    def distance(self, x, y):
        """d(x, y) = |x^-1 y| for states x, y."""
        w = self.presentation.invert(self.geodesic_word(x))
        return self.length(self.multiply_word(self.state_of(w), self.geodesic_word(y)))

    def relative(self, x, y):
        """State of x^-1 y."""
        w = self.presentation.invert(self.geodesic_word(x))
        return self.multiply_word(self.state_of(w), self.geodesic_word(y))


class FreeGroup(Group):
    def __init__(self, presentation):
        if presentation.relators:
            raise ValueError("FreeGroup takes a presentation without relators")
        super().__init__(presentation)
        self.identity = ()

    def step(self, state, t):
        if state and state[-1] == self.inverses[t]:
            return state[:-1]
        return state + (t,)

    def length(self, state):
        return len(state)

    def normal_form(self, state):
        return state

    def state_of(self, word):
        return free_reduce(self.presentation.parse(word), self.inverses)


class SurfaceGroup(Group):
    """Genus-2 surface group through the octagon tiling (exact, any length)."""

    def __init__(self, presentation):
        if presentation.generators != tiling.SYMBOLS or presentation.relators != ("abABcdCD",):
            raise ValueError("SurfaceGroup only handles the surface_genus2 preset")
        super().__init__(presentation)
        self.identity = tiling.IDENTITY

    def step(self, state, t):
        return tiling.step(state, t)

    def length(self, state):
        return state[18]

    def geodesic_word(self, state):
        word = []
        while state[18] > 0:
            for t in range(self.rank):
                if not tiling.goes_up(state, t):
                    state = tiling.step(state, t)
                    word.append(self.inverses[t])
                    break
        return tuple(reversed(word))

    def normal_form(self, state):
        n = state[18]
        levels = [None] * (n + 1)
        levels[n] = {state}
        for k in range(n, 0, -1):
            below = set()
            for s in levels[k]:
                for t in range(self.rank):
                    if not tiling.goes_up(s, t):
                        below.add(tiling.step(s, t))
            levels[k - 1] = below
        word = []
        cur = self.identity
        for k in range(n):
            for t in range(self.rank):
                nxt = tiling.step(cur, t)
                if nxt in levels[k + 1]:
                    break
            word.append(t)
            cur = nxt
        return tuple(word)


class DehnRewriter:
    """Dehn reduction and bounded half-relator rewriting for C'(1/6) presentations."""

    def __init__(self, presentation, budget=20000):
        self.presentation = presentation
        self.inverses = presentation.inverses
        self.budget = budget
        self.long_pieces = {}
        self.half_swaps = {}
        self.max_len = 0
        for c in cyclic_words(presentation):
            n = len(c)
            self.max_len = max(self.max_len, n)
            for ell in range(n // 2 + 1, n + 1):
                piece = c[:ell]
                repl = presentation.invert(c[ell:])
                old = self.long_pieces.get(piece)
                if old is None or len(repl) < len(old):
                    self.long_pieces[piece] = repl
            if n % 2 == 0:
                half = c[: n // 2]
                self.half_swaps.setdefault(half, set()).add(presentation.invert(c[n // 2:]))

    def reduce(self, word):
        """Free reduction plus Dehn's algorithm until no long relator piece remains."""
        w = list(free_reduce(word, self.inverses))
        i = 0
        while i < len(w):
            replaced = False
            for ell in range(min(self.max_len, len(w) - i), 0, -1):
                repl = self.long_pieces.get(tuple(w[i:i + ell]))
                if repl is not None:
                    w[i:i + ell] = list(repl)
                    w = list(free_reduce(w, self.inverses))
                    i = max(0, i - self.max_len)
                    replaced = True
                    break
            if not replaced:
                i += 1
        return tuple(w)

    def canonical(self, word):
        """Shortlex-least word among Dehn-reduced words reachable by half swaps."""
        w = self.reduce(word)
        while True:
            seen = {w}
            frontier = [w]
            shorter = None
            while frontier and shorter is None:
                nxt = []
                for v in frontier:
                    for alt in self._swaps(v):
                        r = self.reduce(alt)
                        if len(r) < len(v):
                            shorter = r
                            break
                        if r not in seen:
                            seen.add(r)
                            nxt.append(r)
                            if len(seen) > self.budget:
                                raise RuntimeError("relator rewriting budget exhausted")
                    if shorter is not None:
                        break
                frontier = nxt
            if shorter is None:
                return min(seen)
            w = shorter

    def _swaps(self, w):
        for half, repls in self.half_swaps.items():
            h = len(half)
            for i in range(len(w) - h + 1):
                if w[i:i + h] == half:
                    for r in repls:
                        yield w[:i] + r + w[i + h:]


class DehnGroup(Group):
    """Solver for small-cancellation presentations; states are normal forms."""

    def __init__(self, presentation, budget=20000):
        if not satisfies_c_prime(presentation):
            raise ValueError(
                f"presentation fails C'(1/6): max piece ratio {max_piece_ratio(presentation)}")
        super().__init__(presentation)
        self.rewriter = DehnRewriter(presentation, budget)
        self.identity = ()
        self._cache = {}

    def step(self, state, t):
        key = (state, t)
        out = self._cache.get(key)
        if out is None:
            out = self.rewriter.canonical(state + (t,))
            if len(self._cache) < 1_000_000:
                self._cache[key] = out
        return out

    def length(self, state):
        return len(state)

    def normal_form(self, state):
        return state

    def state_of(self, word):
        return self.rewriter.canonical(self.presentation.parse(word))


def make_group(presentation, solver=None):
    """Pick the solver for a presentation ("auto", "free", "tiling", "dehn")."""
    solver = solver or "auto"
    if solver == "auto":
        if presentation.preset_tag == "free_rank2" or not presentation.relators:
            solver = "free"
        elif presentation.preset_tag == "surface_genus2":
            solver = "tiling"
        else:
            solver = "dehn"
    if solver == "free":
        return FreeGroup(presentation)
    if solver == "tiling":
        return SurfaceGroup(presentation)
    if solver == "dehn":
        return DehnGroup(presentation)
    raise ValueError(f"unknown solver {solver!r}")

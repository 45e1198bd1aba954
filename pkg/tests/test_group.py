from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brwends.group import (DehnGroup, GroupElement, GroupPresentation, cyclic_words,
                           free_reduce, make_group, max_piece_ratio, preset, satisfies_c_prime,
                           trace_faces)


def words(symbols, max_size=14):
    return st.lists(st.sampled_from(symbols), max_size=max_size).map("".join)


def test_presentation_requires_inverses():
    with pytest.raises(ValueError, match="inverse"):
        GroupPresentation(("a", "b", "A"))


def test_presentation_rejects_unreduced_relator():
    with pytest.raises(ValueError, match="reduced"):
        GroupPresentation(("a", "A"), ("aA",))
    with pytest.raises(ValueError, match="reduced"):
        GroupPresentation(("a", "b", "A", "B"), ("abA" + "a",))


def test_planar_order_must_be_permutation():
    with pytest.raises(ValueError, match="permutation"):
        GroupPresentation(("a", "A"), (), ("a", "a"))


def test_parse_rejects_unknown_symbol(free):
    with pytest.raises(ValueError, match="unknown generator"):
        free.parse("ax")


def test_free_reduction_example(free_group, free):
    assert free_group.canonicalize("aAb") == GroupElement(free.parse("b"))


@pytest.mark.parametrize("name", ["free_rank2", "surface_genus2"])
def test_empty_word_is_identity(name):
    g = make_group(preset(name))
    assert g.canonicalize("") == GroupElement(())


def test_surface_relator_is_identity(surface_group, surface):
    assert surface_group.canonicalize("abABcdCD").normal_form == ()
    for c in cyclic_words(surface):
        assert surface_group.canonicalize(c).normal_form == ()


def test_surface_presentation_is_small_cancellation(surface):
    # pieces are single letters of an 8-letter relator
    assert max_piece_ratio(surface) == Fraction(1, 8)
    assert satisfies_c_prime(surface)


def test_dehn_rejects_non_small_cancellation():
    p = GroupPresentation(("a", "b", "A", "B"), ("abAB",))
    with pytest.raises(ValueError, match="C'"):
        make_group(p, "dehn")


def test_planar_order_traces_relator_faces(surface):
    faces = trace_faces(surface)
    rel = cyclic_words(surface)
    assert len(faces) == 1 and len(faces[0]) == 8
    assert faces[0] in rel


def test_naive_letter_order_does_not_close_faces():
    # the naive order (a, b, A, B, c, d, C, D) does not give octagonal faces
    p = GroupPresentation(("a", "b", "c", "d", "A", "B", "C", "D"), ("abABcdCD",),
                          ("a", "b", "A", "B", "c", "d", "C", "D"))
    faces = trace_faces(p)
    assert not all(f in cyclic_words(p) for f in faces)


@settings(max_examples=300, deadline=None)
@given(words("abAB", 30))
def test_free_canonical_is_fixed_point(w):
    from brwends.group import free_rank2

    g = make_group(free_rank2())
    x = g.canonicalize(w)
    assert g.canonicalize(x.normal_form) == x
    assert x.normal_form == free_reduce(free_rank2().parse(w), free_rank2().inverses)


@settings(max_examples=300, deadline=None)
@given(words("abcdABCD", 16))
def test_surface_canonical_is_fixed_point(w):
    from brwends.group import surface_genus2

    g = make_group(surface_genus2())
    x = g.canonicalize(w)
    assert g.canonicalize(x.normal_form) == x
    assert len(x.normal_form) <= len(w)


@settings(max_examples=150, deadline=None)
@given(words("abcdABCD", 10))
def test_tiling_and_dehn_agree(w):
    from brwends.group import surface_genus2

    p = surface_genus2()
    tiling_nf = make_group(p, "tiling").canonicalize(w).normal_form
    dehn_nf = DehnGroup(p).canonicalize(w).normal_form
    assert tiling_nf == dehn_nf


@settings(max_examples=150, deadline=None)
@given(words("abcdABCD", 10), words("abcdABCD", 10))
def test_surface_equality_is_the_word_problem(u, v):
    from brwends.group import surface_genus2

    p = surface_genus2()
    g = make_group(p)
    same = g.canonicalize(u) == g.canonicalize(v)
    # u = v iff u v^-1 is trivial
    assert same == (g.canonicalize(p.parse(u) + p.invert(p.parse(v))).normal_form == ())


def test_ten_thousand_random_words_idempotent(free_group, surface_group, rng):
    for g in (free_group, surface_group):
        k = g.rank
        for _ in range(10_000 // 2):
            w = tuple(int(t) for t in rng.integers(0, k, size=int(rng.integers(0, 12))))
            x = g.canonicalize(w)
            assert g.canonicalize(x.normal_form) == x

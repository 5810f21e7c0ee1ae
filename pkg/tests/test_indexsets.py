from itertools import combinations

import pytest

from haarexp import indexsets as ix


def as_sets(family):
    return {frozenset(I) for I in family}


def test_c_seq():
    assert [ix.c_seq(n) for n in range(4)] == [0, 6, 42, 258]
    with pytest.raises(ValueError):
        ix.c_seq(-1)
    with pytest.raises(OverflowError):
        ix.c_seq(13)


def test_j1_matches_example():
    uni = ix.build_universe(1)
    assert set(uni.all_sets) == {(2, 1), (3, 1), (5, 4), (6, 4)}


def test_j2_first_image_matches_example():
    uni = ix.build_universe(2)
    expected = {(8, 2, 1, 19), (9, 3, 1, 19), (11, 5, 4, 19), (12, 6, 4, 19)}
    assert set(uni.image(1, 1)) == expected
    assert as_sets(uni.image(1, 1)) == as_sets(expected)


def test_apply_map_examples():
    assert ix.apply_map(False, 1, 1, ()) == (2, 1)
    assert ix.apply_map(False, 2, 1, ()) == (3, 1)
    assert ix.apply_map(True, 1, 1, ()) == (5, 4)
    with pytest.raises(ValueError):
        ix.apply_map(False, 2, 2, ())
    with pytest.raises(ValueError):
        ix.apply_map(False, 3, 1, ())


def test_cardinalities():
    sizes = [len(ix.build_universe(n).all_sets) for n in range(4)]
    assert sizes == [1, 4, 48, 960]
    for n in range(3):
        assert sizes[n + 1] == 4 * (2 * n + 1) * sizes[n]


@pytest.mark.parametrize("n", [1, 2, 3])
def test_images_disjoint(n):
    assert ix.check_disjoint_images(n) == []


def test_second_order_images_are_disjoint_blocks():
    uni = ix.build_universe(2)
    blocks = [set(v) for v in uni.images.values()]
    assert len(blocks) == 12
    assert all(len(b) == 4 for b in blocks)
    for a, b in combinations(blocks, 2):
        assert not a & b


def test_depth_examples():
    assert ix.depth(1, 2) == 1
    assert ix.depth(1, 1) == 2
    assert ix.depth(2, 19) == 4
    with pytest.raises(ValueError):
        ix.depth(1, 7)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_depth_coherence(n):
    uni = ix.build_universe(n)
    positions = {}
    for I in uni.all_sets:
        assert len(set(I)) == len(I)
        assert max(I) <= 2 * ix.c_seq(n)
        for pos, s in enumerate(I, start=1):
            positions.setdefault(s, set()).add(pos)
    assert all(len(p) == 1 for p in positions.values())
    for s, (pos,) in positions.items():
        assert uni.depth(s) == pos


@pytest.mark.parametrize("n", [1, 2, 3])
def test_tail_propagation(n):
    uni = ix.build_universe(n)
    for members in uni.branches.values():
        for I in members:
            for K in members:
                for l in range(2 * n):
                    if I[l] == K[l]:
                        assert I[l:] == K[l:]


def test_tail_matching_pairs():
    assert ix.tail_matching_pairs((), 1) == [((), ())]
    assert len(ix.tail_matching_pairs((1,), 3)) == 16
    pairs = ix.tail_matching_pairs((1,), 2)
    assert len(pairs) == 8
    assert all(I[1] == J[1] for I, J in pairs)


def test_branch_keys_validated():
    uni = ix.build_universe(2)
    assert len(uni.branch(1, 3)) == 16
    with pytest.raises(ValueError):
        uni.branch(1, 4)
    with pytest.raises(ValueError):
        uni.branch(2, 1)
    with pytest.raises(ValueError):
        ix.build_universe(5)


def test_dump_lines():
    text = ix.dump(1)
    lines = text.splitlines()
    assert len(lines) == 4
    assert lines[0] == "branch 1: 2,1"

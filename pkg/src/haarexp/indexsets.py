"""
Recursive index-set families.

``J_0`` holds the empty set.  ``J_{n+1}`` is the union of the images of
``J_n`` under the maps ``F^{j,v}`` and their shifted twins, for positions
``1 <= j <= 2n+1`` and variants ``v in {1, 2}``.  Every set is stored as an
ordered tuple because the positional structure matters: the integer ``s``
always sits at the same position in every member of ``J_n`` that
contains it (its *depth*).

Two groupings of ``J_{n+1}`` are exposed:

* ``images[(j, v, tilde)]``: the image of the whole ``J_n`` under a single
  map, e.g. ``images[(1, 1, False)]`` at order 2 is
  ``{(8,2,1,19), (9,3,1,19), (11,5,4,19), (12,6,4,19)}``;
* ``branch(key)``: the recursively defined subfamilies
  ``J_{i_0,...,i_n}``, each the union of the four maps at position
  ``i_n`` applied to the parent branch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product
from typing import Dict, List, Tuple

IndexSet = Tuple[int, ...]

MAX_ORDER = 4


def c_seq(n: int) -> int:
    """``c_0 = 0`` and ``c_{n+1} = 6 c_n + 6``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n > 12:
        raise OverflowError("orders above 12 are not supported")
    c = 0
    for _ in range(n):
        c = 6 * c + 6
    return c


def apply_map(tilde: bool, variant: int, j: int, I: IndexSet) -> IndexSet:
    """Image of ``I`` (order ``n = len(I)/2``) under ``F^{j,variant}``.

    With ``c = c_n`` and ``shift = c`` (variant 1) or ``2c`` (variant 2):

    * ``j <= 2n``: ``(I_1+shift, ..., I_j+shift, I_j, ..., I_2n, 3c+1)``
    * ``j = 2n+1``: ``(I_1+shift, ..., I_2n+shift, 3c+1+variant, 3c+1)``

    The shifted maps add ``3c+3`` to every entry.
    """
    I = tuple(I)
    if len(I) % 2:
        raise ValueError("index sets have even length")
    n = len(I) // 2
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    if not 1 <= j <= 2 * n + 1:
        raise ValueError(f"position j={j} outside [1, {2 * n + 1}]")
    c = c_seq(n)
    shift = c * variant
    if j <= 2 * n:
        out = tuple(x + shift for x in I[:j]) + I[j - 1:] + (3 * c + 1,)
    else:
        out = tuple(x + shift for x in I) + (3 * c + 1 + variant, 3 * c + 1)
    if tilde:
        out = tuple(x + 3 * c + 3 for x in out)
    return out


def _check_key(key: Tuple[int, ...]) -> Tuple[int, ...]:
    key = tuple(int(k) for k in key)
    for pos, k in enumerate(key):
        if not 1 <= k <= 2 * pos + 1:
            raise ValueError(f"branch key entry i_{pos}={k} outside [1, {2 * pos + 1}]")
    return key


@dataclass(frozen=True)
class IndexUniverse:
    """The family ``J_n`` with its decompositions and depth map."""

    order: int
    all_sets: Tuple[IndexSet, ...]
    images: Dict[Tuple[int, int, bool], Tuple[IndexSet, ...]] = field(repr=False)
    branches: Dict[Tuple[int, ...], Tuple[IndexSet, ...]] = field(repr=False)
    depth_map: Dict[int, int] = field(repr=False)

    def branch(self, *key) -> Tuple[IndexSet, ...]:
        if len(key) == 1 and isinstance(key[0], (tuple, list)):
            key = tuple(key[0])
        key = _check_key(key)
        if len(key) != self.order:
            raise ValueError(f"branch keys at order {self.order} have length {self.order}")
        return self.branches[key]

    def image(self, j: int, variant: int, tilde: bool = False) -> Tuple[IndexSet, ...]:
        return self.images[(j, variant, bool(tilde))]

    def depth(self, s: int) -> int:
        if s not in self.depth_map:
            raise KeyError(f"{s} does not occur in J_{self.order}")
        return self.depth_map[s]


@lru_cache(maxsize=None)
def _family(n: int) -> Tuple[Tuple[IndexSet, ...], Dict, Dict]:
    """Return ``(J_n, images, branches)`` for ``n >= 0``."""
    if n == 0:
        return ((),), {}, {(): ((),)}
    prev, _, prev_branches = _family(n - 1)
    images = {}
    for j in range(1, 2 * (n - 1) + 2):
        for variant in (1, 2):
            for tilde in (False, True):
                images[(j, variant, tilde)] = tuple(
                    apply_map(tilde, variant, j, I) for I in prev
                )
    branches = {}
    for key, members in prev_branches.items():
        for j in range(1, 2 * (n - 1) + 2):
            sets = []
            for variant in (1, 2):
                for tilde in (False, True):
                    sets.extend(apply_map(tilde, variant, j, I) for I in members)
            branches[key + (j,)] = tuple(sets)
    seen = {}
    for key in sorted(images):
        for I in images[key]:
            seen.setdefault(I, key)
    return tuple(sorted(seen)), images, branches


def build_universe(n: int) -> IndexUniverse:
    """Enumerate ``J_n`` (``n <= 4``) with images, branches and depths."""
    if n < 0:
        raise ValueError("order must be non-negative")
    if n > MAX_ORDER:
        raise ValueError(f"order {n} too large (at most {MAX_ORDER})")
    sets, images, branches = _family(n)
    depth_map: Dict[int, int] = {}
    for I in sets:
        for pos, s in enumerate(I, start=1):
            if depth_map.setdefault(s, pos) != pos:
                raise RuntimeError(f"integer {s} found at two positions in J_{n}")
    return IndexUniverse(n, sets, images, branches, depth_map)


def depth(n: int, s: int) -> int:
    """Position (1-based) of ``s`` in every member of ``J_n`` containing it."""
    if not 1 <= s <= c_seq(n):
        raise ValueError(f"s={s} outside [1, c_{n}]")
    return build_universe(n).depth(s)


def tail_matching_pairs(branch: Tuple[int, ...], s: int) -> List[Tuple[IndexSet, IndexSet]]:
    """Ordered pairs ``(I, J)`` of the branch with ``I_l = J_l`` for ``l >= s``."""
    branch = _check_key(branch)
    members = build_universe(len(branch)).branch(branch) if branch else ((),)
    return [
        (I, J)
        for I, J in product(members, repeat=2)
        if I[s - 1:] == J[s - 1:]
    ]


def check_disjoint_images(n: int) -> List[Tuple[IndexSet, list]]:
    """Sets of ``J_n`` produced by more than one map (empty if disjoint)."""
    if n == 0:
        return []
    _, images, _ = _family(n)
    owner: Dict[IndexSet, list] = {}
    for key, members in images.items():
        for I in members:
            owner.setdefault(I, []).append(key)
    return [(I, keys) for I, keys in sorted(owner.items()) if len(keys) > 1]


def dump(n: int) -> str:
    """Text listing of ``J_n``: one set per line, labelled by its branch."""
    uni = build_universe(n)
    lines = []
    for key in sorted(uni.branches):
        tag = ",".join(str(k) for k in key) if key else "-"
        for I in uni.branches[key]:
            lines.append(f"branch {tag}: " + ",".join(str(x) for x in I))
    return "\n".join(lines)

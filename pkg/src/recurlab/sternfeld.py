"""Grid combinatorics: rook circuits, vanishing-marginal measures and partial tensor embeddings.

Sites are 0-based integer tuples in a grid of shape ``dims``. In two
dimensions a site (i, j) is an edge between row-vertex i and column-vertex j
of a bipartite graph; a rook circuit is exactly a cycle of that graph, so a
set is without rook circuit (WRC) iff the graph is a forest, which gives
|S| <= p + q - 1 at once. In any dimension a set supports a nonzero signed
measure with vanishing axis marginals iff the site-by-marginal incidence
matrix has a nontrivial kernel.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import sympy

from .errors import InvalidArgument, NotWDSA, RankMismatch, SizingError
from .linalg import svd

MARGINAL_TOL = 1e-12
RANK_TOL = 1e-9
EXACT_RANK_CAP = 64
SITE_CAP = 4096
BOUND_SCAN_CAP = 20
EMBED_RANK_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    periodic: bool = False

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise InvalidArgument(f"grid needs >= 2 axes of size >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def sites(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(d) for d in self.dims)))

    def contains(self, site) -> bool:
        return len(site) == self.rank and all(0 <= c < d for c, d in zip(site, self.dims))

    @classmethod
    def parse(cls, text: str) -> "Grid":
        return cls(tuple(int(t) for t in text.split(",") if t.strip()))


@dataclass(frozen=True)
class GridSubset:
    grid: Grid
    sites: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        sites = tuple(tuple(int(c) for c in s) for s in self.sites)
        for s in sites:
            if not self.grid.contains(s):
                raise InvalidArgument(f"site {s} outside grid {self.grid.dims}")
        if len(set(sites)) != len(sites):
            raise InvalidArgument("duplicate sites")
        object.__setattr__(self, "sites", sites)

    def __len__(self) -> int:
        return len(self.sites)

    @classmethod
    def of(cls, dims: Sequence[int], sites: Iterable[Sequence[int]]) -> "GridSubset":
        return cls(Grid(tuple(dims)), tuple(tuple(s) for s in sites))


@dataclass(frozen=True)
class RookPath:
    turning_points: tuple[tuple[int, ...], ...]

    def validate(self, subset: GridSubset | None = None) -> bool:
        pts = self.turning_points
        n = len(pts)
        if n < 4 or n % 2 or len(set(pts)) != n:
            return False
        for t in range(n):
            a, b = pts[t], pts[(t + 1) % n]
            if sum(x != y for x, y in zip(a, b)) != 1:
                return False
        if len(pts[0]) == 2:
            # moves alternate between rows and columns
            axes = [next(i for i in range(2) if pts[t][i] != pts[(t + 1) % n][i]) for t in range(n)]
            if any(axes[t] == axes[(t + 1) % n] for t in range(n)):
                return False
        if subset is not None and not set(pts) <= set(subset.sites):
            return False
        return True

    def alternating_measure(self) -> "SignedGridMeasure":
        return SignedGridMeasure({p: (1.0 if t % 2 == 0 else -1.0) for t, p in enumerate(self.turning_points)})


@dataclass(frozen=True)
class SignedGridMeasure:
    weights: dict

    @property
    def support(self) -> list:
        return [s for s, w in self.weights.items() if w != 0]


# -- rook circuits ---------------------------------------------------------------

def _require_2d(subset: GridSubset):
    if subset.grid.rank != 2:
        raise InvalidArgument("rook circuits are defined on 2-D grids; use is_wdsa for higher rank")


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _forest_path(adj: dict, start, goal) -> list:
    prev = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if v == goal:
            break
        for w in adj.get(v, ()):
            if w not in prev:
                prev[w] = v
                queue.append(w)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def find_rook_circuit(subset: GridSubset) -> RookPath | None:
    """A rook circuit inside ``subset``, or None if it has none."""
    _require_2d(subset)
    uf = _UnionFind()
    adj: dict = {}
    for i, j in subset.sites:
        r, c = ("r", i), ("c", j)
        if not uf.union(r, c):
            # the forest path c ~> r plus this edge closes a cycle
            verts = _forest_path(adj, c, r) + [c]
            pts = []
            for a, b in zip(verts[:-1], verts[1:]):
                row, col = (a, b) if a[0] == "r" else (b, a)
                pts.append((row[1], col[1]))
            return RookPath(tuple(pts))
        adj.setdefault(r, []).append(c)
        adj.setdefault(c, []).append(r)
    return None


def is_wrc(subset: GridSubset) -> bool:
    return find_rook_circuit(subset) is None


@dataclass(frozen=True)
class BoundReport:
    p: int
    q: int
    max_wrc_size: int
    witness: tuple
    subsets_checked: int
    bound_holds: bool

    def to_json(self) -> dict:
        return {
            "p": self.p, "q": self.q, "max_wrc_size": self.max_wrc_size,
            "bound": self.p + self.q - 1, "bound_holds": self.bound_holds,
            "witness": [list(s) for s in self.witness], "subsets_checked": self.subsets_checked,
        }


def check_wrc_bound(p: int, q: int, *, cap: int = BOUND_SCAN_CAP) -> BoundReport:
    """Scan all 2^(pq) subsets: the largest WRC set should have p + q - 1 sites."""
    if p < 1 or q < 1:
        raise InvalidArgument("p, q must be >= 1")
    if p * q > cap:
        raise SizingError(f"p*q = {p * q} exceeds the exhaustive cap {cap}")
    grid = Grid((p, q))
    cells = grid.sites()
    best, witness = -1, ()
    holds = True
    for mask in range(1 << len(cells)):
        sites = tuple(c for b, c in enumerate(cells) if mask >> b & 1)
        if is_wrc(GridSubset(grid, sites)):
            if len(sites) > best:
                best, witness = len(sites), sites
            if len(sites) > p + q - 1:
                holds = False
    return BoundReport(p, q, best, witness, 1 << len(cells), holds and best == p + q - 1)


def first_row_and_column(p: int, q: int) -> GridSubset:
    """S0: row 0 together with column 0, a WRC set of size p + q - 1."""
    sites = [(0, j) for j in range(q)] + [(i, 0) for i in range(1, p)]
    return GridSubset.of((p, q), sites)


# -- measures -------------------------------------------------------------------

def marginals(measure: SignedGridMeasure, dims: Sequence[int] | None = None) -> list[np.ndarray]:
    """Push-forward of the measure to each coordinate axis."""
    sites = list(measure.weights)
    if dims is None:
        if not sites:
            return []
        dims = [max(s[a] for s in sites) + 1 for a in range(len(sites[0]))]
    out = [np.zeros(d) for d in dims]
    for s, w in measure.weights.items():
        for a, c in enumerate(s):
            out[a][c] += w
    return out


def is_dsa_measure(measure: SignedGridMeasure, dims: Sequence[int] | None = None) -> bool:
    """Nonzero measure whose marginals all vanish (within 1e-12)."""
    if not measure.support:
        return False
    return all(np.all(np.abs(m) <= MARGINAL_TOL) for m in marginals(measure, dims))


def incidence_matrix(subset: GridSubset) -> np.ndarray:
    """Rows: (axis, coordinate) marginal constraints; columns: sites."""
    dims = subset.grid.dims
    offs = np.concatenate([[0], np.cumsum(dims)])
    a = np.zeros((offs[-1], len(subset)), dtype=int)
    for col, s in enumerate(subset.sites):
        for ax, c in enumerate(s):
            a[offs[ax] + c, col] = 1
    return a


@dataclass(frozen=True)
class WdsaReport:
    is_wdsa: bool
    kernel_dim: int
    kernel_support: tuple = ()
    kernel_measure: SignedGridMeasure | None = None
    exact: bool = False
    minimal_certified: bool = False  # support of a kernel vector is not proven minimal

    def to_json(self) -> dict:
        return {
            "is_wdsa": self.is_wdsa, "kernel_dim": self.kernel_dim,
            "kernel_support": [list(s) for s in self.kernel_support],
            "exact_rank": self.exact, "support_minimal_certified": self.minimal_certified,
        }


def wdsa_report(subset: GridSubset, *, exact: bool | None = None) -> WdsaReport:
    """Kernel analysis of the marginal map restricted to ``subset``.

    Exact rational arithmetic is used for up to 64 sites (or when forced);
    otherwise an SVD rank with threshold 1e-9.
    """
    n = len(subset)
    if n == 0:
        return WdsaReport(True, 0, exact=True)
    if n > SITE_CAP:
        raise SizingError(f"{n} sites exceed the linear-algebra cap {SITE_CAP}")
    a = incidence_matrix(subset)
    use_exact = n <= EXACT_RANK_CAP if exact is None else exact
    if use_exact:
        null = sympy.Matrix(a).nullspace()
        kdim = len(null)
        vec = np.array([float(x) for x in null[0]]) if null else None
    else:
        _, s, vh = np.linalg.svd(a.astype(float))
        rank = int(np.sum(s > RANK_TOL * max(1.0, s[0] if len(s) else 0.0)))
        kdim = n - rank
        vec = vh[-1].real if kdim else None
    if not kdim:
        return WdsaReport(True, 0, exact=use_exact)
    vec = vec / np.max(np.abs(vec))
    keep = np.abs(vec) > RANK_TOL
    support = tuple(s for s, k in zip(subset.sites, keep) if k)
    meas = SignedGridMeasure({s: float(w) for s, w, k in zip(subset.sites, vec, keep) if k})
    return WdsaReport(False, kdim, support, meas, use_exact)


def is_wdsa(subset: GridSubset, *, exact: bool | None = None) -> bool:
    """True iff no nonzero measure on ``subset`` has vanishing marginals."""
    return wdsa_report(subset, exact=exact).is_wdsa


# -- labels and embeddings ----------------------------------------------------------

def solve_labels_on_subset(subset: GridSubset, values: Sequence[float], *, tol: float = 1e-9) -> list[np.ndarray] | None:
    """Axis labels whose coordinate sums hit ``values`` on every site, or None.

    Labels are gauge-fixed by least-norm; None when the best fit misses by more than ``tol``.
    """
    v = np.asarray(values, dtype=float)
    if len(v) != len(subset):
        raise InvalidArgument("need one value per site")
    a = incidence_matrix(subset).T.astype(float)
    x, *_ = np.linalg.lstsq(a, v, rcond=None)
    if len(v) and np.max(np.abs(a @ x - v)) > tol * max(1.0, float(np.max(np.abs(v)))):
        return None
    offs = np.concatenate([[0], np.cumsum(subset.grid.dims)])
    return [x[offs[i]:offs[i + 1]] for i in range(subset.grid.rank)]


@dataclass(frozen=True)
class PartialEmbedding:
    factors: tuple[np.ndarray, ...]  # diagonal O_i
    right_iso: np.ndarray  # coimage of M (dim n x r) -> grid basis (K x r)
    left_iso: np.ndarray  # image of M -> grid basis
    sites: tuple
    singulars: np.ndarray
    residual: float

    def assembled(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for f in self.factors:
            out = np.kron(out, f)
        return out


def _site_index(site, dims) -> int:
    idx = 0
    for c, d in zip(site, dims):
        idx = idx * d + c
    return idx


def partial_tensor_embed(m, subset: GridSubset) -> PartialEmbedding:
    """Embed a rank-|S| matrix into a tensor product of diagonal operators.

    The r nonzero singular values of M, in descending order, are placed on
    the sites of S in lexicographic order. Labels are the logs solved on S,
    each O_i is diag(exp(labels_i)), and the isometries send M's singular
    vectors to the chosen site basis vectors. The residual is
    ||Vemb^dag (O_1 x ... x O_r) Uemb - Sigma|| on the r-dimensional core.
    """
    a = np.asarray(m, dtype=complex)
    dec = svd(a)
    s = dec.singulars
    r = int(np.sum(s > EMBED_RANK_TOL))
    if r != len(subset):
        raise RankMismatch(f"rank(M) = {r} but |S| = {len(subset)}")
    rep = wdsa_report(subset)
    if not rep.is_wdsa:
        raise NotWDSA(f"S supports a vanishing-marginal measure on {len(rep.kernel_support)} sites")
    sites = tuple(sorted(subset.sites))
    ordered = GridSubset(subset.grid, sites)
    labels = solve_labels_on_subset(ordered, np.log(s[:r]))
    if labels is None:  # cannot happen for a WDSA set; guard anyway
        raise NotWDSA("labels inconsistent on S")
    factors = tuple(np.diag(np.exp(lab)).astype(complex) for lab in labels)
    dims = subset.grid.dims
    big = int(np.prod(dims))
    e = np.zeros((big, r), dtype=complex)
    for t, site in enumerate(sites):
        e[_site_index(site, dims), t] = 1
    u_sing = dec.left.data[:, :r]
    v_sing = dec.right.data[:, :r]
    # maps: singular vector t -> site basis vector t
    right_iso = e @ v_sing.conj().T  # K x n, acts on M's input space
    left_iso = e @ u_sing.conj().T  # K x m
    emb = PartialEmbedding(factors, right_iso, left_iso, sites, s[:r], 0.0)
    o = emb.assembled()
    core = left_iso.conj().T @ o @ right_iso
    residual = float(np.linalg.norm(core - a, 2))
    return PartialEmbedding(factors, right_iso, left_iso, sites, s[:r], residual)

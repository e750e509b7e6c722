"""Oriented clique complexes and the combinatorial exterior derivatives on them.

Everything here depends only on graph topology. Edges are stored with the
canonical orientation ``(i, j)``, ``i < j``; triangles as ``(i, j, k)`` with
``i < j < k``. The incidence matrices follow the alternating-sum convention

    (d_k f)(i_0, ..., i_{k+1}) = sum_j (-1)^j f(i_0, ..., ^i_j, ..., i_{k+1})

so ``(d0 q)_{ij} = q_j - q_i`` and
``(d1 p)_{ijk} = p_{jk} - p_{ik} + p_{ij}``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import jax
import jax.numpy as jnp
import numpy as np
import scipy.sparse as sp


DENSE_EDGE_LIMIT = 32


class ComplexError(ValueError):
    """Raised when a graph cannot be turned into a clique complex."""


@dataclass(frozen=True, eq=False)
class CliqueComplex:
    """Graph with its enumerated 0-, 1- and 2-cliques and incidence matrices.

    ``d0`` is ``|E| x |V|`` and ``d1`` is ``|T| x |E|``; both are integer CSR
    matrices. The index arrays (``src``, ``tgt``, ``tri_*``) give the same
    operators in gather/scatter form, which is what the differentiable code
    paths use.
    """

    node_count: int
    edges: np.ndarray  # (|E|, 2), rows sorted, i < j
    triangles: np.ndarray  # (|T|, 3), i < j < k
    d0: sp.csr_matrix
    d1: sp.csr_matrix
    tri_edges: np.ndarray = field(repr=False)  # (|T|, 3) indices of edges (ij, jk, ik)

    @property
    def n_nodes(self) -> int:
        return self.node_count

    @property
    def small(self) -> bool:
        """Use dense incidence matmuls; scatters dominate the cost on tiny graphs."""
        return self.n_edges <= DENSE_EDGE_LIMIT

    @cached_property
    def d0_dense(self) -> np.ndarray:
        return self.d0.toarray().astype(np.float64)

    @cached_property
    def d1_dense(self) -> np.ndarray:
        return self.d1.toarray().astype(np.float64)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def src(self) -> np.ndarray:
        return self.edges[:, 0]

    @property
    def tgt(self) -> np.ndarray:
        return self.edges[:, 1]

    def count(self, degree: int) -> int:
        return (self.n_nodes, self.n_edges, self.n_triangles)[degree]

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def adjacency(self) -> sp.csr_matrix:
        n = self.n_nodes
        i, j = self.src, self.tgt
        data = np.ones(2 * len(i), dtype=np.int64)
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): e for e, (a, b) in enumerate(self.edges)}


@dataclass(frozen=True)
class Cochain:
    """Real feature array on the k-cliques of a complex."""

    degree: int
    values: np.ndarray

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise ValueError(f"cochain degree must be 0, 1 or 2, got {self.degree}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        object.__setattr__(self, "values", vals)

    def check(self, cx: CliqueComplex) -> None:
        expected = cx.count(self.degree)
        if self.values.shape[0] != expected:
            raise ValueError(
                f"degree-{self.degree} cochain has {self.values.shape[0]} rows, "
                f"complex has {expected} {self.degree}-cliques"
            )


def build_complex(node_count: int, edge_list) -> CliqueComplex:
    """Canonicalize ``edge_list`` and enumerate triangles.

    Duplicate edges (in either orientation) are collapsed. Self-loops and
    out-of-range indices raise :class:`ComplexError`.
    """
    if node_count < 0:
        raise ComplexError(f"node_count must be non-negative, got {node_count}")
    seen = set()
    for pair in edge_list:
        a, b = (int(v) for v in pair)
        if a == b:
            raise ComplexError(f"self-loop at edge ({a}, {b})")
        if not (0 <= a < node_count and 0 <= b < node_count):
            raise ComplexError(f"edge ({a}, {b}) references a node outside [0, {node_count})")
        seen.add((min(a, b), max(a, b)))
    edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
    n_e = len(edges)

    eidx = {(int(a), int(b)): e for e, (a, b) in enumerate(edges)}
    nbrs = [set() for _ in range(node_count)]
    for a, b in edges:
        nbrs[a].add(int(b))
        nbrs[b].add(int(a))
    tris = []
    for i, j in edges:
        # k > j keeps each triangle exactly once, already sorted
        for k in sorted(nbrs[i] & nbrs[j]):
            if k > j:
                tris.append((int(i), int(j), k))
    triangles = np.array(tris, dtype=np.int64).reshape(-1, 3)
    tri_edges = np.array(
        [(eidx[(i, j)], eidx[(j, k)], eidx[(i, k)]) for i, j, k in tris], dtype=np.int64
    ).reshape(-1, 3)

    rows = np.repeat(np.arange(n_e), 2)
    cols = edges.ravel()
    vals = np.tile(np.array([-1, 1], dtype=np.int64), n_e)
    d0 = sp.csr_matrix((vals, (rows, cols)), shape=(n_e, node_count), dtype=np.int64)

    n_t = len(triangles)
    rows = np.repeat(np.arange(n_t), 3)
    cols = tri_edges.ravel()
    vals = np.tile(np.array([1, 1, -1], dtype=np.int64), n_t)
    d1 = sp.csr_matrix((vals, (rows, cols)), shape=(n_t, n_e), dtype=np.int64)

    return CliqueComplex(node_count, edges, triangles, d0, d1, tri_edges)


# --- gather/scatter forms, differentiable and linear in graph size -----------

def grad0(cx: CliqueComplex, q):
    """d0 q: node -> edge."""
    if cx.small:
        return jnp.tensordot(cx.d0_dense, q, axes=1)
    return q[cx.tgt] - q[cx.src]


def div0(cx: CliqueComplex, g):
    """d0^T g: edge -> node (the l2 divergence, note the sign)."""
    if cx.small:
        return jnp.tensordot(cx.d0_dense.T, g, axes=1)
    n = cx.n_nodes
    return jax.ops.segment_sum(g, cx.tgt, n) - jax.ops.segment_sum(g, cx.src, n)


def curl1(cx: CliqueComplex, p):
    """d1 p: edge -> triangle."""
    if cx.n_triangles == 0:
        return jnp.zeros((0,) + p.shape[1:], dtype=p.dtype)
    if cx.small:
        return jnp.tensordot(cx.d1_dense, p, axes=1)
    te = cx.tri_edges
    return p[te[:, 0]] + p[te[:, 1]] - p[te[:, 2]]


def curl1_t(cx: CliqueComplex, r):
    """d1^T r: triangle -> edge."""
    m = cx.n_edges
    if cx.n_triangles == 0:
        return jnp.zeros((m,) + r.shape[1:], dtype=r.dtype)
    if cx.small:
        return jnp.tensordot(cx.d1_dense.T, r, axes=1)
    te = cx.tri_edges
    return (
        jax.ops.segment_sum(r, te[:, 0], m)
        + jax.ops.segment_sum(r, te[:, 1], m)
        - jax.ops.segment_sum(r, te[:, 2], m)
    )


# --- Cochain-level API ---------------------------------------------------------

def apply_d(cx: CliqueComplex, cochain: Cochain) -> Cochain:
    cochain.check(cx)
    if cochain.degree == 0:
        return Cochain(1, np.asarray(cx.d0 @ cochain.values))
    if cochain.degree == 1:
        return Cochain(2, np.asarray(cx.d1 @ cochain.values))
    raise ValueError("d_k is only defined here for k in {0, 1}")


def apply_d_transpose(cx: CliqueComplex, cochain: Cochain) -> Cochain:
    cochain.check(cx)
    if cochain.degree == 1:
        return Cochain(0, np.asarray(cx.d0.T @ cochain.values))
    if cochain.degree == 2:
        return Cochain(1, np.asarray(cx.d1.T @ cochain.values))
    raise ValueError("d_k^T takes a cochain of degree 1 or 2")


def laplacian0(cx: CliqueComplex) -> sp.csr_matrix:
    """Combinatorial node Laplacian d0^T d0 (integer)."""
    return (cx.d0.T @ cx.d0).tocsr()


def hodge_decompose(cx: CliqueComplex, cochain: Cochain):
    """Split an edge cochain into exact + harmonic + coexact parts (l2 metric).

    The exact and coexact parts are least-squares projections onto
    ``im d0`` and ``im d1^T``; the harmonic part is the remainder, which lies
    in ``ker d0^T  ∩ ker d1`` because the two images are orthogonal.
    """
    if cochain.degree != 1:
        raise ValueError("hodge_decompose expects a degree-1 cochain")
    cochain.check(cx)
    p = cochain.values
    exact = _project(cx.d0, p)
    coexact = _project(cx.d1.T.tocsr(), p)
    harmonic = p - exact - coexact
    return Cochain(1, exact), Cochain(1, harmonic), Cochain(1, coexact)


def _project(B: sp.spmatrix, y: np.ndarray) -> np.ndarray:
    if B.shape[1] == 0:
        return np.zeros_like(y)
    if max(B.shape) <= 2000:
        Bd = B.toarray().astype(float)
        coef, *_ = np.linalg.lstsq(Bd, y, rcond=None)
        return Bd @ coef
    from scipy.sparse.linalg import lsqr

    Bf = B.astype(float)
    cols = [Bf @ lsqr(Bf, y[:, c], atol=1e-15, btol=1e-15, iter_lim=20 * B.shape[1])[0]
            for c in range(y.shape[1])]
    return np.stack(cols, axis=1)


# --- graph I/O and generators ---------------------------------------------------

def load_graph(path) -> CliqueComplex:
    """Read an edge list (``i j`` per line) or JSON ``{"n": int, "edges": [...]}``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        obj = json.loads(text)
        return build_complex(int(obj["n"]), obj["edges"])
    edges = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        a, b = line.split()[:2]
        edges.append((int(a), int(b)))
    n = 1 + max((max(e) for e in edges), default=-1)
    return build_complex(n, edges)


def save_graph(cx: CliqueComplex, path) -> None:
    path = Path(path)
    if path.suffix == ".json":
        path.write_text(json.dumps({"n": cx.n_nodes, "edges": cx.edges.tolist()}))
    else:
        path.write_text("".join(f"{a} {b}\n" for a, b in cx.edges))


def erdos_renyi(n: int, prob: float, rng: np.random.Generator) -> CliqueComplex:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < prob
    return build_complex(n, np.stack([iu[keep], ju[keep]], axis=1))


def complete_graph(n: int) -> CliqueComplex:
    iu, ju = np.triu_indices(n, 1)
    return build_complex(n, np.stack([iu, ju], axis=1))


def cycle_graph(n: int) -> CliqueComplex:
    return build_complex(n, [(i, (i + 1) % n) for i in range(n)])


def ring_lattice(n: int, k: int) -> CliqueComplex:
    """Each node joined to its ``k`` nearest neighbours on each side (degree 2k)."""
    edges = [(i, (i + s) % n) for i in range(n) for s in range(1, k + 1)]
    return build_complex(n, edges)

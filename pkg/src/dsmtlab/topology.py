"""Communication graphs, gossip matrices, and accelerated consensus.

The lab's network model is an undirected connected graph with self-loops on
all nodes, turned into a symmetric doubly stochastic mixing matrix ``W`` by
one of two weight schemes.  The *lazy* shift ``(I + W)/2`` makes ``W``
positive semidefinite, the precondition for the loopless Chebyshev-style
consensus acceleration implemented by :class:`LcaOperator`: one augmented
multiplication

    ``top' = (1 + eta)*W@top - eta*bottom,   bottom' = top``

contracts consensus error at the square-root rate ``rho = sqrt(eta)`` with
``eta = 1/(1 + sqrt(1 - lambda^2))``, up to the fixed constant ``c0 = 14``:

    ``||Pi (top'_k; bottom'_k)||^2 <= c0 * rho^(2k) * ||Pi A||^2``

for all ``k >= 0`` when started from ``top = bottom = A``.  Here ``Pi`` is
the row-mean-removing projector and ``lambda = ||W - J||_2`` with
``J = ones/n`` (so ``1 - lambda`` is the spectral gap).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

LCA_C0 = 14.0
PSD_TOLERANCE = -1e-10
ROW_SUM_TOLERANCE = 1e-12
DENSE_EIG_MAX_N = 512
POWER_ITERATION_CAP = 200_000
POWER_ITERATION_TOL = 1e-12

GRAPH_KINDS = ("ring", "complete", "grid2d", "erdos_renyi", "custom")
WEIGHT_SCHEMES = ("uniform_neighbor", "metropolis")

ER_MAX_ATTEMPTS = 100


class TopologyError(ValueError):
    """Invalid graph specification, weight scheme, or operator input."""


class SpectralConvergenceError(RuntimeError):
    """Power iteration failed to converge; carries the iteration count."""

    def __init__(self, message: str, iterations: int):
        super().__init__(message)
        self.iterations = iterations


@dataclass(frozen=True)
class GraphSpec:
    """Declarative description of a communication graph.

    Parameters
    ----------
    kind : one of ``ring``, ``complete``, ``grid2d``, ``erdos_renyi``,
        ``custom``.
    n : number of agents (>= 1).
    p_edge : edge probability, required for ``erdos_renyi`` only.
    edges : iterable of undirected pairs, required for ``custom`` only.
    """

    kind: str
    n: int
    p_edge: float | None = None
    edges: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise TopologyError(
                f"unknown graph kind {self.kind!r}; expected one of {GRAPH_KINDS}")
        if self.n < 1:
            raise TopologyError(f"graph size n must be >= 1, got {self.n}")
        if self.kind == "erdos_renyi":
            if self.p_edge is None or not (0.0 < self.p_edge <= 1.0):
                raise TopologyError(
                    f"erdos_renyi requires p_edge in (0, 1], got {self.p_edge}")
        if self.kind == "custom" and self.edges is None:
            raise TopologyError("custom graphs require an edge list")


@dataclass(frozen=True)
class Graph:
    """A realized undirected connected graph with self-loops.

    ``adjacency`` is a dense symmetric boolean matrix whose diagonal is all
    True.  ``degrees`` counts neighbors excluding the self-loop.
    """

    spec: GraphSpec
    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1) - 1

    def is_regular(self) -> bool:
        deg = self.degrees
        return bool(np.all(deg == deg[0]))


def _connected(adjacency: np.ndarray) -> bool:
    """Breadth-first search reachability from node 0."""
    n = adjacency.shape[0]
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adjacency[u]):
                if not seen[v]:
                    seen[v] = True
                    nxt.append(int(v))
        frontier = nxt
    return bool(seen.all())


def _grid_sides(n: int) -> tuple[int, int]:
    """Most-square factorization: largest divisor <= sqrt(n), times n//s."""
    s = int(np.floor(np.sqrt(n)))
    while n % s != 0:
        s -= 1
    return s, n // s


def build_graph(spec: GraphSpec, rng: np.random.Generator | None = None) -> Graph:
    """Realize a :class:`GraphSpec` into a concrete connected graph.

    Erdos-Renyi graphs are resampled until connected, up to 100 attempts;
    running out raises :class:`TopologyError`.  Custom edge lists are
    validated for index range and connectivity.  Self-loops are always
    present in the returned adjacency.
    """
    n = spec.n
    adj = np.zeros((n, n), dtype=bool)
    if spec.kind == "ring":
        for i in range(n):
            adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = True
    elif spec.kind == "complete":
        adj[:] = True
    elif spec.kind == "grid2d":
        rows, cols = _grid_sides(n)
        for r in range(rows):
            for c in range(cols):
                u = r * cols + c
                if c + 1 < cols:
                    adj[u, u + 1] = adj[u + 1, u] = True
                if r + 1 < rows:
                    adj[u, u + cols] = adj[u + cols, u] = True
    elif spec.kind == "erdos_renyi":
        if rng is None:
            raise TopologyError("erdos_renyi graphs require an rng")
        for attempt in range(ER_MAX_ATTEMPTS):
            adj[:] = False
            iu = np.triu_indices(n, k=1)
            mask = rng.random(len(iu[0])) < spec.p_edge
            adj[iu[0][mask], iu[1][mask]] = True
            adj |= adj.T
            np.fill_diagonal(adj, True)
            if _connected(adj):
                break
        else:
            raise TopologyError(
                f"erdos_renyi(n={n}, p_edge={spec.p_edge}) stayed disconnected "
                f"after {ER_MAX_ATTEMPTS} attempts")
    elif spec.kind == "custom":
        for (u, v) in spec.edges:
            if not (0 <= u < n and 0 <= v < n):
                raise TopologyError(
                    f"custom edge ({u}, {v}) out of range for n={n}")
            adj[u, v] = adj[v, u] = True
        np.fill_diagonal(adj, True)
        if not _connected(adj):
            raise TopologyError("custom edge list yields a disconnected graph")
    np.fill_diagonal(adj, True)
    if not _connected(adj):
        raise TopologyError(f"{spec.kind} graph with n={n} is disconnected")
    return Graph(spec=spec, adjacency=adj)


@dataclass(frozen=True)
class MixingMatrix:
    """A symmetric doubly stochastic gossip matrix with cached spectrum.

    ``lam`` is ``||W - ones/n||_2`` (so the spectral gap is ``1 - lam``).
    ``psd_certified`` is set by an explicit smallest-eigenvalue check
    (``min eig >= -1e-10``), never by construction trust.
    """

    W: np.ndarray
    lam: float = field(default=None)  # type: ignore[assignment]
    psd_certified: bool = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float)
        object.__setattr__(self, "W", W)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise TopologyError(f"mixing matrix must be square, got {W.shape}")
        if not np.array_equal(W, W.T):
            raise TopologyError("mixing matrix must be symmetric")
        row_err = np.max(np.abs(W.sum(axis=1) - 1.0))
        if row_err > ROW_SUM_TOLERANCE:
            raise TopologyError(
                f"mixing matrix rows must sum to 1 within {ROW_SUM_TOLERANCE:g}; "
                f"worst error {row_err:.3e}")
        if np.any(np.diag(W) <= 0.0):
            raise TopologyError("mixing matrix must have positive diagonal")
        lam, min_eig = _spectrum(W)
        certified = bool(min_eig >= PSD_TOLERANCE)
        if self.lam is not None and abs(self.lam - lam) > 1e-9:
            raise TopologyError(
                f"stated lam={self.lam} disagrees with the spectrum ({lam:.12g})")
        if self.psd_certified is not None and bool(self.psd_certified) != certified:
            raise TopologyError(
                "stated psd_certified flag disagrees with the explicit "
                f"eigenvalue check (min eig {min_eig:.3e})")
        object.__setattr__(self, "lam", float(lam))
        object.__setattr__(self, "psd_certified", certified)

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def gap(self) -> float:
        return 1.0 - self.lam


def mixing_from_graph(graph: Graph, scheme: str = "uniform_neighbor",
                      lazy: bool = True) -> MixingMatrix:
    """Build a gossip matrix from a graph.

    ``uniform_neighbor`` assigns 1/(d+1) to every incident edge and the
    self-loop; it is doubly stochastic only on regular graphs and refuses
    anything else.  ``metropolis`` uses 1/(1 + max(d_i, d_j)) off-diagonal
    and puts the slack on the diagonal; it works on any graph.  ``lazy``
    replaces W by (I + W)/2, which shifts the spectrum into [0, 1] (the
    PSD certificate is still established by an explicit eigenvalue check).
    """
    if scheme not in WEIGHT_SCHEMES:
        raise TopologyError(
            f"unknown weight scheme {scheme!r}; expected one of {WEIGHT_SCHEMES}")
    n = graph.n
    adj = graph.adjacency
    deg = graph.degrees
    W = np.zeros((n, n), dtype=float)
    if scheme == "uniform_neighbor":
        if not graph.is_regular():
            raise TopologyError(
                "uniform_neighbor weights require a regular graph "
                f"(degrees range {deg.min()}..{deg.max()}); use metropolis")
        w = 1.0 / (deg[0] + 1.0)
        W[adj] = w
    else:
        for i in range(n):
            for j in np.flatnonzero(adj[i]):
                if j > i:
                    W[i, j] = W[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
        np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    if lazy:
        W = (np.eye(n) + W) / 2.0
    mixing = MixingMatrix(W=W)
    off_support = W[~np.eye(n, dtype=bool)] > 0
    off_edges = adj[~np.eye(n, dtype=bool)]
    if not np.array_equal(off_support, off_edges):
        raise TopologyError("weight support does not match the edge set")
    return mixing


# -- spectral gap -----------------------------------------------------------

_gap_cache: dict[tuple[str, bytes], tuple[float, float]] = {}
_GAP_CACHE_MAX = 64


def _spectrum(W: np.ndarray, method: str = "auto") -> tuple[float, float]:
    """Return (lam, min_eig) of a symmetric stochastic matrix, cached."""
    n = W.shape[0]
    if method == "auto":
        method = "dense" if n <= DENSE_EIG_MAX_N else "power"
    key = (method, W.tobytes())
    hit = _gap_cache.get(key)
    if hit is not None:
        return hit
    if method == "dense":
        eigs = np.linalg.eigvalsh(W)
        # Largest eigenvalue of a connected doubly stochastic matrix is the
        # simple Perron value 1; lam is the largest remaining magnitude.
        lam = float(np.max(np.abs(eigs[:-1]))) if n > 1 else 0.0
        min_eig = float(eigs[0])
    else:
        lam = _power_lambda(W)
        min_eig = 1.0 - _power_top(np.eye(n) - W)
    result = (lam, min_eig)
    if len(_gap_cache) >= _GAP_CACHE_MAX:
        _gap_cache.pop(next(iter(_gap_cache)))
    _gap_cache[key] = result
    return result


def _power_top(B: np.ndarray) -> float:
    """Top eigenvalue of a symmetric PSD matrix by power iteration."""
    rng = np.random.Generator(np.random.PCG64(0))
    x = rng.standard_normal(B.shape[0])
    x /= np.linalg.norm(x)
    value = 0.0
    for it in range(POWER_ITERATION_CAP):
        y = B @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = float(x @ y)
        x = y / norm
        if it > 2 and abs(new - value) <= POWER_ITERATION_TOL * max(abs(new), 1e-30):
            return new
        value = new
    raise SpectralConvergenceError(
        f"power iteration did not converge in {POWER_ITERATION_CAP} iterations",
        POWER_ITERATION_CAP)


def _power_lambda(W: np.ndarray) -> float:
    """``||W - J||_2`` by deflated power iteration on the squared operator."""
    n = W.shape[0]
    rng = np.random.Generator(np.random.PCG64(1))
    x = rng.standard_normal(n)
    x -= x.mean()
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return 0.0
    x /= nx
    value = 0.0
    for it in range(POWER_ITERATION_CAP):
        y = W @ x
        y -= y.mean()          # deflate the all-ones eigenspace
        y = W @ y
        y -= y.mean()
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        new = float(x @ y)     # Rayleigh quotient of (Pi W)^2: lambda^2
        x = y / norm
        if it > 2 and abs(new - value) <= POWER_ITERATION_TOL * max(abs(new), 1e-30):
            return float(np.sqrt(max(new, 0.0)))
        value = new
    raise SpectralConvergenceError(
        f"power iteration did not converge in {POWER_ITERATION_CAP} iterations",
        POWER_ITERATION_CAP)


def spectral_gap(W: np.ndarray | MixingMatrix, method: str = "auto") -> float:
    """Return ``lam = ||W - ones/n||_2`` (the gap itself is ``1 - lam``).

    Dense symmetric eigensolve for n <= 512; deflated power iteration above
    (or when ``method="power"``).  Results are cached on the matrix bytes.
    """
    if isinstance(W, MixingMatrix):
        return W.lam
    W = np.asarray(W, dtype=float)
    lam, _ = _spectrum(W, method=method)
    return lam


# -- loopless Chebyshev-style acceleration ----------------------------------

def lca_params(lam: float) -> tuple[float, float]:
    """Map a mixing parameter ``lam`` to ``(eta_w, rho_tilde_w)``.

    ``eta_w = 1/(1 + sqrt(1 - lam^2))`` lies in [1/2, 1) and the per-step
    contraction factor is its square root.  Domain: ``0 <= lam < 1``.
    """
    if not 0.0 <= lam < 1.0:
        raise TopologyError(f"lca_params requires 0 <= lam < 1, got {lam}")
    eta = 1.0 / (1.0 + np.sqrt(1.0 - lam * lam))
    return float(eta), float(np.sqrt(eta))


@dataclass(frozen=True)
class LcaOperator:
    """Augmented consensus operator bound to a PSD-certified mixing matrix.

    Refuses matrices without the PSD certificate: the contraction guarantee
    needs the spectrum of ``W`` inside [0, 1].
    """

    mixing: MixingMatrix
    eta_w: float = field(default=None)  # type: ignore[assignment]
    rho_tilde_w: float = field(default=None)  # type: ignore[assignment]
    c0: float = LCA_C0

    def __post_init__(self):
        if not self.mixing.psd_certified:
            raise TopologyError(
                "LcaOperator requires a PSD-certified mixing matrix; "
                "build it with lazy=True or check the spectrum")
        eta, rho = lca_params(self.mixing.lam)
        if self.eta_w is None:
            object.__setattr__(self, "eta_w", eta)
        if self.rho_tilde_w is None:
            object.__setattr__(self, "rho_tilde_w", rho)

    def apply(self, top: np.ndarray, bottom: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return lca_apply(self.mixing.W, self.eta_w, top, bottom)


def lca_apply(W: np.ndarray, eta_w: float, top: np.ndarray,
              bottom: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One augmented multiplication without materializing the 2n x 2n matrix.

    Returns ``(top', bottom') = ((1 + eta)*W@top - eta*bottom, top)``.  The
    first block is evaluated as ``W@top + eta*(W@top - bottom)``, which is
    exact at consensus fixed points (``W@top == top == bottom`` gives back
    ``top`` bitwise) while being algebraically identical.
    """
    if top.shape != bottom.shape:
        raise TopologyError(
            f"top/bottom shapes differ: {top.shape} vs {bottom.shape}")
    if top.shape[0] != W.shape[0]:
        raise TopologyError(
            f"state has {top.shape[0]} rows but W is {W.shape[0]}x{W.shape[0]}")
    mixed = W @ top
    return mixed + eta_w * (mixed - bottom), top


def save_mixing(path, mixing: MixingMatrix) -> None:
    """Serialize a mixing matrix in the plain-text matrix format."""
    from . import textio
    textio.write_matrix(path, mixing.W,
                        comments=[f"lam = {textio.format_float(mixing.lam)}",
                                  f"psd_certified = {mixing.psd_certified}"])


def load_mixing(path) -> MixingMatrix:
    """Load a mixing matrix written by :func:`save_mixing` (re-validated)."""
    from . import textio
    return MixingMatrix(W=textio.read_matrix(path))

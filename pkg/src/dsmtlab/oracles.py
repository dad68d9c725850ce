"""Datasets, partitions, and per-agent stochastic first-order oracles.

Three objective families share one suite container:

* ``logistic_l2``: binary logistic loss plus ``(rho/2)||x||^2`` (strongly
  convex with ``mu = rho``);
* ``logistic_nonconvex``: logistic loss plus the bounded nonconvex
  regularizer ``(omega/2) * sum_q x_q^2 / (1 + x_q^2)``;
* ``quadratic``: per-agent least squares ``f_i = ||A_i x - b_i||^2 / (2 m_i)``
  with exact minimizer, optimum value, and noise constants computed at
  construction.

The global objective is the *mean of agents*, so each sample ``j`` held by
agent ``i`` carries weight ``1/(n * m_i)`` in ``f`` (shard sizes may differ
by one after heterogeneous partitioning).  Stochastic gradients draw sample
indices uniformly with replacement inside one agent's shard; regularizers
are applied deterministically and therefore add no sampling noise.

Noise-model constants (documented recipes, overridable for logistic):

* quadratic: the per-sample gradient is ``a_j (a_j^T x - b_j)``, and
  ``Var_i(x) <= 4 max_j ||a_j||^2 (f_i(x) - f_i^*) + 2 Var_i(x_i^*)``,
  so ``C = 4 max ||a_j||^2`` and ``sigma^2 = 2 max_i Var_i(x_i^*)`` satisfy
  the relaxed-growth noise bound exactly;
* logistic: the per-sample data gradient lives in a ball of radius
  ``max_j ||u_j||``, giving the conservative ``C = 0``,
  ``sigma^2 = 4 max_j ||u_j||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from . import textio

SUITE_KINDS = ("logistic_l2", "logistic_nonconvex", "quadratic")
REFERENCE_GRAD_TOL = 1e-10
REFERENCE_ITER_CAP = 2_000_000


class OracleError(ValueError):
    """Invalid dataset, partition, or oracle request."""


# -- data -------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    """Binary classification data: real features, labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise OracleError(
                f"features {X.shape} and labels {y.shape} are inconsistent")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise OracleError("labels must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def generate_synthetic(n_samples: int, dim: int, separation: float,
                       rng: np.random.Generator) -> Dataset:
    """Two unit-covariance Gaussian clusters offset by +-separation/2.

    The offset is along the first coordinate; classes are exactly balanced
    (sizes differ by at most one) and sample order is shuffled.
    """
    if n_samples < 2:
        raise OracleError("need at least 2 samples (one per class)")
    n_pos = n_samples // 2 + n_samples % 2
    labels = np.concatenate([np.ones(n_pos), -np.ones(n_samples - n_pos)])
    features = rng.standard_normal((n_samples, dim))
    features[:, 0] += labels * (separation / 2.0)
    perm = rng.permutation(n_samples)
    return Dataset(features=features[perm], labels=labels[perm])


@dataclass(frozen=True)
class Partition:
    """Disjoint covering assignment of sample indices to agents."""

    shards: tuple[np.ndarray, ...]
    n_samples: int

    def __post_init__(self):
        all_idx = np.concatenate(self.shards) if self.shards else np.array([])
        if any(len(s) == 0 for s in self.shards):
            raise OracleError("every agent needs at least one sample")
        if (len(all_idx) != self.n_samples
                or not np.array_equal(np.sort(all_idx), np.arange(self.n_samples))):
            raise OracleError(
                "shards must partition 0..n_samples-1 exactly (disjoint, covering)")

    @property
    def n_agents(self) -> int:
        return len(self.shards)


def partition_heterogeneous(dataset: Dataset, n_agents: int) -> Partition:
    """Label-sorted contiguous split: maximally skewed label distributions.

    Indices are stably sorted by label and cut into ``n_agents`` contiguous
    chunks whose sizes differ by at most one.
    """
    if n_agents < 1:
        raise OracleError(f"n_agents must be >= 1, got {n_agents}")
    if n_agents > dataset.n_samples:
        raise OracleError(
            f"cannot give {n_agents} agents at least one of "
            f"{dataset.n_samples} samples")
    order = np.argsort(dataset.labels, kind="stable")
    shards = tuple(np.ascontiguousarray(s)
                   for s in np.array_split(order, n_agents))
    return Partition(shards=shards, n_samples=dataset.n_samples)


def partition_shuffled(dataset: Dataset, n_agents: int,
                       rng: np.random.Generator) -> Partition:
    """Uniformly shuffled counterpart of :func:`partition_heterogeneous`."""
    if n_agents > dataset.n_samples:
        raise OracleError("more agents than samples")
    order = rng.permutation(dataset.n_samples)
    shards = tuple(np.ascontiguousarray(s)
                   for s in np.array_split(order, n_agents))
    return Partition(shards=shards, n_samples=dataset.n_samples)


def label_skew(dataset: Dataset, partition: Partition) -> float:
    """Mean over agents of the max single-label fraction in their shard."""
    fracs = []
    for shard in partition.shards:
        y = dataset.labels[shard]
        fracs.append(max((y == 1.0).mean(), (y == -1.0).mean()))
    return float(np.mean(fracs))


# -- serialization ----------------------------------------------------------

def save_dataset(path, dataset: Dataset) -> None:
    """One sample per line: label then features, 17 significant digits."""
    mat = np.column_stack([dataset.labels, dataset.features])
    textio.write_matrix(path, mat)


def load_dataset(path) -> Dataset:
    mat = textio.read_matrix(path)
    if mat.shape[1] < 2:
        raise OracleError(f"{path}: need a label column plus features")
    return Dataset(features=mat[:, 1:], labels=mat[:, 0])


def save_partition(path, partition: Partition) -> None:
    """One agent per line: ``agent: idx idx ...``."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# n_samples = {partition.n_samples}\n")
        for i, shard in enumerate(partition.shards):
            fh.write(f"{i}: " + " ".join(str(int(j)) for j in shard) + "\n")


def load_partition(path) -> Partition:
    shards = {}
    n_samples = 0
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line.startswith("# n_samples"):
                n_samples = int(line.split("=")[1])
                continue
            if not line or line.startswith("#"):
                continue
            head, _, rest = line.partition(":")
            shards[int(head)] = np.array([int(t) for t in rest.split()],
                                         dtype=np.intp)
    ordered = tuple(shards[i] for i in range(len(shards)))
    return Partition(shards=ordered, n_samples=n_samples)


# -- objective suites -------------------------------------------------------

@dataclass(frozen=True)
class GradientSample:
    """A stochastic gradient estimate and the batch size that produced it."""

    value: np.ndarray
    batch_size: int


class ObjectiveSuite:
    """Per-agent smooth objectives over concatenated shard-ordered samples.

    Internals: ``M`` stacks one row per sample in shard order (signed
    features ``v_j u_j`` for logistic, least-squares rows ``a_j`` for
    quadratic), ``aux`` is the per-sample scalar (unused zeros for logistic,
    targets ``b_j`` for quadratic), and ``shard_ptr`` delimits agents.
    ``sample_weights`` rescales per-sample losses so pooled single-agent
    views keep the mean-of-agents objective unbiased; ``None`` means all
    ones and is skipped entirely in the arithmetic.
    """

    def __init__(self, kind: str, M: np.ndarray, aux: np.ndarray,
                 shard_ptr: np.ndarray, reg_weight: float,
                 C: float | None = None, sigma: float | None = None,
                 sample_weights: np.ndarray | None = None):
        if kind not in SUITE_KINDS:
            raise OracleError(f"unknown suite kind {kind!r}")
        self.kind = kind
        self.M = np.ascontiguousarray(M, dtype=float)
        self.aux = np.ascontiguousarray(aux, dtype=float)
        self.shard_ptr = np.asarray(shard_ptr, dtype=np.intp)
        self.reg_weight = float(reg_weight)
        self.sample_weights = (None if sample_weights is None
                               else np.asarray(sample_weights, dtype=float))
        self.n_agents = len(self.shard_ptr) - 1
        self.dim = self.M.shape[1]
        self._x_star: np.ndarray | None = None
        self._f_star: float | None = None
        self._sigma_f_star: float | None = None
        # global per-sample weights: 1/(n m_i), folded with sample_weights
        sizes = np.diff(self.shard_ptr)
        if np.any(sizes <= 0):
            raise OracleError("every shard must be nonempty")
        gw = np.repeat(1.0 / (self.n_agents * sizes.astype(float)), sizes)
        if self.sample_weights is not None:
            gw = gw * self.sample_weights
        self._gw = gw
        self._init_constants(C, sigma)

    # -- constructors --------------------------------------------------

    @classmethod
    def logistic(cls, dataset: Dataset, partition: Partition, *,
                 regularizer: str, weight: float,
                 C: float | None = None,
                 sigma: float | None = None) -> "ObjectiveSuite":
        """Logistic suite over a partitioned dataset.

        ``regularizer`` is ``"l2"`` (kind ``logistic_l2``, requires
        ``weight > 0``) or ``"nonconvex"`` (kind ``logistic_nonconvex``).
        """
        if regularizer == "l2":
            kind = "logistic_l2"
            if weight <= 0:
                raise OracleError("logistic_l2 requires rho > 0")
        elif regularizer == "nonconvex":
            kind = "logistic_nonconvex"
            if weight < 0:
                raise OracleError("nonconvex regularizer weight must be >= 0")
        else:
            raise OracleError(f"unknown regularizer {regularizer!r}")
        order = np.concatenate(partition.shards)
        signed = dataset.features[order] * dataset.labels[order, None]
        sizes = [len(s) for s in partition.shards]
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        return cls(kind, signed, np.zeros(len(order)), ptr, weight,
                   C=C, sigma=sigma)

    @classmethod
    def quadratic(cls, A_blocks: Sequence[np.ndarray],
                  b_blocks: Sequence[np.ndarray]) -> "ObjectiveSuite":
        """Per-agent least-squares suite; constants are exact."""
        if len(A_blocks) != len(b_blocks) or not A_blocks:
            raise OracleError("need matching nonempty A and b blocks")
        sizes = [A.shape[0] for A in A_blocks]
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        return cls("quadratic", np.vstack(A_blocks), np.concatenate(b_blocks),
                   ptr, 0.0)

    # -- per-sample pieces ----------------------------------------------

    def _shard(self, i: int) -> slice:
        if not 0 <= i < self.n_agents:
            raise OracleError(f"agent index {i} out of range (n={self.n_agents})")
        return slice(self.shard_ptr[i], self.shard_ptr[i + 1])

    def shard_size(self, i: int) -> int:
        s = self._shard(i)
        return s.stop - s.start

    def _data_losses(self, rows: np.ndarray, aux: np.ndarray,
                     x: np.ndarray) -> np.ndarray:
        t = rows @ x
        if self.kind == "quadratic":
            r = t - aux
            return 0.5 * r * r
        return np.logaddexp(0.0, -t)

    def _data_grads(self, rows: np.ndarray, aux: np.ndarray,
                    x: np.ndarray) -> np.ndarray:
        t = rows @ x
        if self.kind == "quadratic":
            return (t - aux)[:, None] * rows
        return (-expit(-t))[:, None] * rows

    def _reg_value(self, x: np.ndarray) -> float:
        if self.kind == "logistic_l2":
            return 0.5 * self.reg_weight * float(x @ x)
        if self.kind == "logistic_nonconvex":
            sq = x * x
            return 0.5 * self.reg_weight * float(np.sum(sq / (1.0 + sq)))
        return 0.0

    def _reg_grad(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "logistic_l2":
            return self.reg_weight * x
        if self.kind == "logistic_nonconvex":
            d = 1.0 + x * x
            return self.reg_weight * x / (d * d)
        return np.zeros_like(x)

    # -- public oracle operations ----------------------------------------

    def eval_full(self, i: int, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Exact ``(f_i(x), grad f_i(x))`` over agent i's full shard."""
        s = self._shard(i)
        x = np.asarray(x, dtype=float)
        rows, aux = self.M[s], self.aux[s]
        losses = self._data_losses(rows, aux, x)
        grads = self._data_grads(rows, aux, x)
        if self.sample_weights is not None:
            wt = self.sample_weights[s]
            losses = losses * wt
            grads = grads * wt[:, None]
        value = float(losses.mean()) + self._reg_value(x)
        grad = grads.mean(axis=0) + self._reg_grad(x)
        return value, grad

    def grad_at_indices(self, i: int, x: np.ndarray,
                        idx: np.ndarray) -> np.ndarray:
        """Mean per-sample gradient at shard-local indices, plus regularizer."""
        s = self._shard(i)
        rows = self.M[s][idx]
        aux = self.aux[s][idx]
        grads = self._data_grads(rows, aux, np.asarray(x, dtype=float))
        if self.sample_weights is not None:
            grads = grads * self.sample_weights[s][idx][:, None]
        return grads.mean(axis=0) + self._reg_grad(x)

    def sample_grad(self, i: int, x: np.ndarray, batch_size: int | str,
                    rng: np.random.Generator) -> GradientSample:
        """Uniform with-replacement minibatch gradient for agent ``i``.

        ``batch_size="full"`` is the deterministic mode: it consumes no
        randomness and returns the exact shard gradient (bitwise equal to
        :meth:`eval_full`).
        """
        m = self.shard_size(i)
        if batch_size == "full":
            idx = np.arange(m)
        else:
            if not isinstance(batch_size, (int, np.integer)) or batch_size < 1:
                raise OracleError(
                    f"batch_size must be a positive integer or 'full', "
                    f"got {batch_size!r}")
            idx = rng.integers(0, m, size=int(batch_size))
        value = self.grad_at_indices(i, x, idx)
        return GradientSample(value=value, batch_size=len(idx))

    def stacked_sample_grads(self, X: np.ndarray,
                             idx_block: np.ndarray) -> np.ndarray:
        """Per-agent minibatch gradients, all agents at once.

        ``X`` stacks one iterate per agent (n x p); ``idx_block`` holds
        shard-local sample indices (n x B).  Returns the n x p matrix whose
        row i is agent i's batch-mean data gradient at ``X[i]`` plus the
        regularizer gradient.
        """
        n, B = idx_block.shape
        if n != self.n_agents:
            raise OracleError(
                f"index block has {n} rows but suite has {self.n_agents} agents")
        flat = (self.shard_ptr[:-1, None] + idx_block).ravel()
        rows = self.M[flat]
        aux = self.aux[flat]
        X_rep = np.repeat(X, B, axis=0)
        t = np.einsum("ij,ij->i", rows, X_rep)
        if self.kind == "quadratic":
            coef = t - aux
        else:
            coef = -expit(-t)
        g = coef[:, None] * rows
        if self.sample_weights is not None:
            g = g * self.sample_weights[flat][:, None]
        return g.reshape(n, B, self.dim).mean(axis=1) + self._reg_grad_stacked(X)

    def stacked_full_grads(self, X: np.ndarray) -> np.ndarray:
        """Exact per-agent gradients at per-agent iterates (rows of ``X``)."""
        if X.shape[0] != self.n_agents:
            raise OracleError(
                f"iterate block has {X.shape[0]} rows but suite has "
                f"{self.n_agents} agents")
        return np.vstack([self.eval_full(i, X[i])[1]
                          for i in range(self.n_agents)])

    def _reg_grad_stacked(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "logistic_l2":
            return self.reg_weight * X
        if self.kind == "logistic_nonconvex":
            d = 1.0 + X * X
            return self.reg_weight * X / (d * d)
        return np.zeros_like(X)

    def eval_global(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean-of-agents objective and gradient at one point."""
        x = np.asarray(x, dtype=float)
        losses = self._data_losses(self.M, self.aux, x)
        grads = self._data_grads(self.M, self.aux, x)
        value = float(self._gw @ losses) + self._reg_value(x)
        grad = self._gw @ grads + self._reg_grad(x)
        return value, grad

    def global_values(self, X: np.ndarray) -> np.ndarray:
        """Vectorized global objective at many points (rows of ``X``)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        T = self.M @ X.T  # (N, q)
        if self.kind == "quadratic":
            R = T - self.aux[:, None]
            data = self._gw @ (0.5 * R * R)
        else:
            data = self._gw @ np.logaddexp(0.0, -T)
        reg = np.array([self._reg_value(x) for x in X])
        return data + reg

    # -- reference optimum -------------------------------------------------

    def solve_reference(self) -> tuple[np.ndarray, float]:
        """Global minimizer and optimal value of the mean-of-agents objective.

        Quadratic: weighted normal equations.  logistic_l2: full-gradient
        descent until ``||grad f|| <= 1e-10``.  logistic_nonconvex: refuses;
        use gradient-norm metrics instead.
        """
        if self._x_star is not None:
            return self._x_star, self._f_star
        if self.kind == "logistic_nonconvex":
            raise OracleError(
                "logistic_nonconvex has no certified global optimum; "
                "use gradient-norm metrics instead of gap metrics")
        if self.kind == "quadratic":
            x_star = _weighted_lstsq(self.M, self.aux, self._gw)
        else:
            x_star = _logistic_gd(self, np.zeros(self.dim))
        self._x_star = x_star
        self._f_star = float(self.global_values(x_star)[0])
        return self._x_star, self._f_star

    @property
    def f_star(self) -> float | None:
        """Optimal value if computable (solves lazily), else None."""
        if self.kind == "logistic_nonconvex":
            return None
        return self.solve_reference()[1]

    def sigma_f_star(self) -> float:
        """Heterogeneity offset: f* minus the mean of per-agent optima."""
        if self._sigma_f_star is not None:
            return self._sigma_f_star
        _, f_star = self.solve_reference()
        agent_opts = []
        for i in range(self.n_agents):
            agent_opts.append(self._agent_optimum(i)[1])
        self._sigma_f_star = float(f_star - np.mean(agent_opts))
        return self._sigma_f_star

    def _agent_optimum(self, i: int) -> tuple[np.ndarray, float]:
        s = self._shard(i)
        if self.kind == "quadratic":
            x = _weighted_lstsq(self.M[s], self.aux[s], None)
        elif self.kind == "logistic_l2":
            x = _agent_logistic_gd(self, i)
        else:
            raise OracleError("per-agent optima unavailable for logistic_nonconvex")
        return x, self.eval_full(i, x)[0]

    # -- noise and smoothness constants -------------------------------------

    def _init_constants(self, C: float | None, sigma: float | None):
        row_sq = np.einsum("ij,ij->i", self.M, self.M)
        if self.kind == "quadratic":
            L = 0.0
            mu_H = np.zeros((self.dim, self.dim))
            var_at_opt = 0.0
            for i in range(self.n_agents):
                s = self._shard(i)
                H_i = self.M[s].T @ self.M[s] / (s.stop - s.start)
                eigs = np.linalg.eigvalsh(H_i)
                L = max(L, float(eigs[-1]))
                mu_H += H_i / self.n_agents
                x_i, _ = self._agent_optimum(i)
                g = self._data_grads(self.M[s], self.aux[s], x_i)
                sq = np.einsum("ij,ij->i", g, g)
                mean_g = g.mean(axis=0)
                var_at_opt = max(var_at_opt,
                                 float(sq.mean() - mean_g @ mean_g))
            self.L = L
            self.C = 4.0 * float(row_sq.max()) if C is None else float(C)
            self.sigma = (float(np.sqrt(2.0 * var_at_opt))
                          if sigma is None else float(sigma))
            self.mu = float(np.linalg.eigvalsh(mu_H)[0])
        else:
            self.L = float(row_sq.max()) / 4.0 + self.reg_weight
            self.C = 0.0 if C is None else float(C)
            self.sigma = (2.0 * float(np.sqrt(row_sq.max()))
                          if sigma is None else float(sigma))
            self.mu = self.reg_weight if self.kind == "logistic_l2" else None

    def conditional_variance(self, i: int, x: np.ndarray) -> float:
        """Exact variance of the one-sample stochastic gradient at ``x``."""
        s = self._shard(i)
        g = self._data_grads(self.M[s], self.aux[s], np.asarray(x, dtype=float))
        if self.sample_weights is not None:
            g = g * self.sample_weights[s][:, None]
        sq = np.einsum("ij,ij->i", g, g)
        mean_g = g.mean(axis=0)
        return float(sq.mean() - mean_g @ mean_g)

    def hessian(self, i: int, x: np.ndarray) -> np.ndarray:
        """Exact per-agent Hessian (logistic kinds; quadratic is constant)."""
        s = self._shard(i)
        x = np.asarray(x, dtype=float)
        rows = self.M[s]
        if self.kind == "quadratic":
            return rows.T @ rows / (s.stop - s.start)
        t = rows @ x
        sig = expit(t)
        H = (rows * (sig * (1.0 - sig))[:, None]).T @ rows / (s.stop - s.start)
        if self.kind == "logistic_l2":
            H += self.reg_weight * np.eye(self.dim)
        else:
            sq = x * x
            H += np.diag(self.reg_weight * (1.0 - 3.0 * sq) / (1.0 + sq) ** 3)
        return H

    # -- pooled view ------------------------------------------------------

    def pooled(self) -> "ObjectiveSuite":
        """Single-agent view over the same samples and the same objective.

        Per-sample weights absorb the original ``1/(n m_i)`` factors so the
        pooled mean objective equals the mean-of-agents objective; with
        equal shards the weights are exactly 1 and are skipped.
        """
        sizes = np.diff(self.shard_ptr)
        n_total = int(self.shard_ptr[-1])
        wt = np.repeat(n_total / (self.n_agents * sizes.astype(float)), sizes)
        if self.sample_weights is not None:
            wt = wt * self.sample_weights
        if np.all(wt == 1.0):
            wt = None
        view = ObjectiveSuite(self.kind, self.M, self.aux,
                              np.array([0, n_total]), self.reg_weight,
                              C=self.C, sigma=self.sigma, sample_weights=wt)
        view.L = self.L
        view.mu = self.mu
        view._x_star, view._f_star = self._x_star, self._f_star
        return view


def _weighted_lstsq(M: np.ndarray, b: np.ndarray,
                    gw: np.ndarray | None) -> np.ndarray:
    if gw is None:
        H = M.T @ M
        rhs = M.T @ b
    else:
        H = M.T @ (M * gw[:, None])
        rhs = M.T @ (gw * b)
    x, *_ = np.linalg.lstsq(H, rhs, rcond=None)
    return x


def _logistic_gd(suite: ObjectiveSuite, x0: np.ndarray) -> np.ndarray:
    """Plain gradient descent on the global objective to ||grad|| <= 1e-10."""
    x = x0.copy()
    step = 1.0 / suite.L
    for _ in range(REFERENCE_ITER_CAP):
        _, g = suite.eval_global(x)
        if np.linalg.norm(g) <= REFERENCE_GRAD_TOL:
            return x
        x = x - step * g
    raise OracleError(
        f"reference solve did not reach ||grad|| <= {REFERENCE_GRAD_TOL} "
        f"within {REFERENCE_ITER_CAP} iterations")


def _agent_logistic_gd(suite: ObjectiveSuite, i: int) -> np.ndarray:
    x = np.zeros(suite.dim)
    step = 1.0 / suite.L
    for _ in range(REFERENCE_ITER_CAP):
        _, g = suite.eval_full(i, x)
        if np.linalg.norm(g) <= REFERENCE_GRAD_TOL:
            return x
        x = x - step * g
    raise OracleError(
        f"per-agent reference solve for agent {i} did not converge")


def make_quadratic_suite(n_agents: int, rows_per_agent: int, dim: int,
                         heterogeneity: float, noise: float,
                         rng: np.random.Generator) -> ObjectiveSuite:
    """Random heterogeneous least-squares instance.

    Each agent gets a fresh Gaussian design ``A_i`` and targets
    ``b_i = A_i (x_base + heterogeneity * d_i) + noise * eps``, so agents
    disagree about the minimizer (heterogeneity) and single-sample gradients
    stay noisy at every agent's optimum (noise).
    """
    if rows_per_agent < 1 or dim < 1:
        raise OracleError("rows_per_agent and dim must be positive")
    x_base = rng.standard_normal(dim)
    A_blocks, b_blocks = [], []
    for _ in range(n_agents):
        A = rng.standard_normal((rows_per_agent, dim)) / np.sqrt(dim)
        target = x_base + heterogeneity * rng.standard_normal(dim)
        b = A @ target + noise * rng.standard_normal(rows_per_agent)
        A_blocks.append(A)
        b_blocks.append(b)
    return ObjectiveSuite.quadratic(A_blocks, b_blocks)

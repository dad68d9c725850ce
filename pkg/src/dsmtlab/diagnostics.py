"""Run-time probes: optimality metrics, invariant residuals, transients.

All metric computation is read-only and uses exact deterministic gradients
(never the sampled ones), except for the residuals that by definition check
the sampled-gradient bookkeeping.  The recorder is stateful because the
momentum-averaged sequence

    ``dbar_k = (xbar_k - beta * xbar_{k-1}) / (1 - beta)``

needs the two previous mean iterates and the previous mean sample gradient;
it ingests the per-step traces produced by the window runners and emits one
:class:`MetricsRow` per recorded iteration.  Along any momentum-tracking run
``dbar`` satisfies the exact recursions

    ``dbar_{k+1} = dbar_k - alpha * gbar_k``
    ``dbar_k - xbar_k = -(alpha * beta / (1 - beta)) * zbar_{k-1}``

with the conventions ``dbar_0 = xbar_0`` and ``zbar_{-1} = 0``; the two
residual fields measure how far a run drifts from them (floating-point
roundoff only, when healthy).  Variants without a momentum buffer are
recorded with an effective beta of zero, for which the step recursion
reduces to the plain mean-iterate identity ``xbar_{k+1} = xbar_k -
alpha * gbar_k`` (it holds for the tracking and plain-gossip baselines,
and its violation for heavy ball is itself informative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracles import ObjectiveSuite
from .optimizers import AlgorithmState, HyperParams
from .topology import LCA_C0, MixingMatrix, lca_params

METRIC_NAMES = ("mean_gap", "grad_norm_sq", "avg_gap", "consensus_x",
                "consensus_y", "tracking_residual", "dbar_step_residual",
                "dbar_offset_residual")


class DiagnosticsError(ValueError):
    """Invalid probe request (missing reference value, bad curves, ...)."""


@dataclass(frozen=True)
class MetricsRow:
    """One recorded iteration.  Gap fields are None when f* is unknown."""

    k: int
    mean_gap: float | None
    grad_norm_sq: float
    avg_gap: float | None
    consensus_x: float
    consensus_y: float
    tracking_residual: float
    dbar_step_residual: float
    dbar_offset_residual: float

    def values(self) -> tuple[float, ...]:
        """Metric values in :data:`METRIC_NAMES` order (None -> nan)."""
        out = []
        for name in METRIC_NAMES:
            v = getattr(self, name)
            out.append(float("nan") if v is None else float(v))
        return tuple(out)


def consensus_projector(A: np.ndarray) -> np.ndarray:
    """Remove the row mean: ``A - ones @ mean_row`` (idempotent)."""
    return A - A.mean(axis=0, keepdims=True)


def _sq_norm(A: np.ndarray) -> float:
    return float(np.sum(A * A))


class MetricsRecorder:
    """Stateful metric computation along one trajectory.

    Protocol: ``record(state0)`` at k = 0, then alternate
    ``ingest(xbar_trace, gbar_trace)`` (the per-step mean traces of the
    window just run) with ``record(state)`` at the window's final
    iteration.  ``record`` never mutates the iterate history, so calling
    it twice on the same state is harmless.
    """

    def __init__(self, suite: ObjectiveSuite, hp: HyperParams,
                 f_star: float | None = None):
        self.suite = suite
        self.alpha = hp.alpha
        self.beta = hp.beta
        self.f_star = f_star if f_star is not None else suite.f_star
        self._xbar_hist: list[np.ndarray] = []   # most recent last, len <= 3
        self._gbar_prev: np.ndarray | None = None

    def ingest(self, xbar_trace: np.ndarray, gbar_trace: np.ndarray) -> None:
        """Feed the per-step mean traces of the steps since the last record."""
        xbar_trace = np.asarray(xbar_trace, dtype=float)
        gbar_trace = np.asarray(gbar_trace, dtype=float)
        if xbar_trace.ndim != 2 or xbar_trace.shape != gbar_trace.shape:
            raise DiagnosticsError(
                "traces must be matching (steps, dim) arrays, got "
                f"{xbar_trace.shape} and {gbar_trace.shape}")
        for row in xbar_trace[-3:]:
            self._xbar_hist.append(row.copy())
            if len(self._xbar_hist) > 3:
                self._xbar_hist.pop(0)
        if len(gbar_trace) >= 2:
            # gbar at the second-to-last step of the window; for one-step
            # windows the previous record() already stashed it.
            self._gbar_prev = gbar_trace[-2].copy()

    def _dbar(self, xbar_new: np.ndarray, xbar_old: np.ndarray,
              beta: float) -> np.ndarray:
        if beta == 0.0:
            return xbar_new
        return (xbar_new - beta * xbar_old) / (1.0 - beta)

    def record(self, state: AlgorithmState) -> MetricsRow:
        """Compute the row for the state's current iteration."""
        xbar = state.x.mean(axis=0)
        f_xbar, g_xbar = self.suite.eval_global(xbar)
        grad_norm_sq = float(g_xbar @ g_xbar)
        mean_gap = avg_gap = None
        if self.f_star is not None:
            mean_gap = f_xbar - self.f_star
            avg_gap = float(self.suite.global_values(state.x).mean()) - self.f_star
        consensus_x = _sq_norm(consensus_projector(state.x))
        consensus_y = _sq_norm(consensus_projector(state.y)) if state.y.size else 0.0

        if state.y.size and state.z.size:
            tracking = float(np.linalg.norm(
                state.y.mean(axis=0) - state.z.mean(axis=0)))
        elif state.y.size and state.g_last.size:
            tracking = float(np.linalg.norm(
                state.y.mean(axis=0) - state.g_last.mean(axis=0)))
        else:
            tracking = 0.0

        beta = self.beta if state.z.size else 0.0
        if state.k == 0:
            # Conventions dbar_0 = xbar_0 and zbar_{-1} = 0 make both
            # residuals exactly zero here; seed the history so the next
            # record sees xbar_{-1} := xbar_0.
            self._xbar_hist = [xbar.copy(), xbar.copy()]
            step_res = 0.0
            offset_res = 0.0
        else:
            if len(self._xbar_hist) < 3 or self._gbar_prev is None:
                raise DiagnosticsError(
                    "recorder needs the window traces: call ingest() before "
                    "record() for k > 0")
            xbar_m1 = self._xbar_hist[-2]
            xbar_m2 = self._xbar_hist[-3]
            dbar_k = self._dbar(xbar, xbar_m1, beta)
            dbar_m1 = self._dbar(xbar_m1, xbar_m2, beta)
            step_res = float(np.linalg.norm(
                dbar_k - dbar_m1 + self.alpha * self._gbar_prev))
            if state.z_prev.size:
                zbar_prev = state.z_prev.mean(axis=0)
                offset = (dbar_k - xbar) + (self.alpha * beta
                                            / (1.0 - beta)) * zbar_prev
            else:
                offset = dbar_k - xbar
            offset_res = float(np.linalg.norm(offset))

        self._gbar_prev = state.g_bar_last.copy()
        return MetricsRow(k=state.k, mean_gap=mean_gap,
                          grad_norm_sq=grad_norm_sq, avg_gap=avg_gap,
                          consensus_x=consensus_x, consensus_y=consensus_y,
                          tracking_residual=tracking,
                          dbar_step_residual=step_res,
                          dbar_offset_residual=offset_res)


def record_metrics(recorder: MetricsRecorder,
                   state: AlgorithmState) -> MetricsRow:
    """Functional alias for :meth:`MetricsRecorder.record`."""
    return recorder.record(state)


# -- energy-function probe ----------------------------------------------------

def lyapunov_probe(state: AlgorithmState, suite: ObjectiveSuite,
                   mixing: MixingMatrix, hp: HyperParams,
                   xbar_prev: np.ndarray,
                   f_star: float | None = None) -> dict[str, float]:
    """Surrogate descent-energy components at the current iteration.

    The five addends of the convergence energy, with the analysis-side
    consensus moments replaced by the measured ``||Pi x||^2`` and
    ``||Pi y||^2`` (hence *surrogate*): the optimality gap at the
    momentum-averaged point, the two consensus terms, the momentum-buffer
    term, and the tracking-error term anchored at the previous iterate.
    Requires a known ``f_star`` (pass it or rely on the suite) and a
    momentum-tracking state (y and z buffers present).
    """
    if f_star is None:
        f_star = suite.f_star
    if f_star is None:
        raise DiagnosticsError(
            "lyapunov_probe needs the reference optimum f*; it is unknown "
            "for this suite")
    if not (state.y.size and state.z_prev.size):
        raise DiagnosticsError(
            "lyapunov_probe needs a momentum-tracking state, got "
            f"{state.variant}")
    alpha, beta = hp.alpha, hp.beta
    n = state.n
    L = suite.L
    C = suite.C
    c0 = LCA_C0
    _, rho = lca_params(mixing.lam)
    gap = 1.0 - rho

    xbar = state.x.mean(axis=0)
    xbar_prev = np.asarray(xbar_prev, dtype=float)
    dbar = ((xbar - beta * xbar_prev) / (1.0 - beta)) if beta else xbar
    head = suite.eval_global(dbar)[0] - f_star
    cons_x = (3.0 * alpha * L ** 2 / (n * gap)) * _sq_norm(
        consensus_projector(state.x))
    cons_y = (12.0 * alpha ** 3 * c0 * rho * L ** 2 / (n * gap ** 3)
              ) * _sq_norm(consensus_projector(state.y))
    zbar_prev = state.z_prev.mean(axis=0)
    momentum = (4.0 * alpha ** 3 * L * (L + 2.0 * C) / (1.0 - beta) ** 3
                ) * float(zbar_prev @ zbar_prev)
    grads_at_mean = np.vstack([suite.eval_full(i, xbar_prev)[1]
                               for i in range(suite.n_agents)])
    tracking = (48.0 * alpha ** 3 * c0 ** 2 * rho * L ** 2 / (n * gap ** 3)
                ) * _sq_norm(state.z_prev - grads_at_mean)
    components = {"optimality": head, "consensus_x": cons_x,
                  "consensus_y": cons_y, "momentum": momentum,
                  "tracking": tracking}
    components["total"] = float(sum(components.values()))
    return components


# -- transient-time estimation -------------------------------------------------

@dataclass(frozen=True)
class TransientEstimate:
    """Smallest K from which one curve stays within c times another."""

    K_hat: int
    c: float
    valid: bool


def estimate_transient(dec_curve: np.ndarray, cen_curve: np.ndarray,
                       c: float = 2.0) -> TransientEstimate:
    """Smallest K with ``dec_curve[k] <= c * cen_curve[k]`` for all k >= K.

    The last violating index pins the answer, so a single backward scan
    suffices.  ``valid`` is False when even the final entry violates, in
    which case ``K_hat`` equals the curve length.
    """
    dec = np.asarray(dec_curve, dtype=float)
    cen = np.asarray(cen_curve, dtype=float)
    if dec.ndim != 1 or cen.ndim != 1 or dec.shape != cen.shape:
        raise DiagnosticsError(
            f"curves must be 1-D and equal length, got {dec.shape} vs "
            f"{cen.shape}")
    if dec.size == 0:
        raise DiagnosticsError("curves must be nonempty")
    if not (np.isfinite(dec).all() and np.isfinite(cen).all()):
        raise DiagnosticsError("curves must be finite")
    if c < 1.0:
        raise DiagnosticsError(f"tolerance factor c must be >= 1, got {c}")
    bad = dec > c * cen
    if not bad.any():
        return TransientEstimate(K_hat=0, c=c, valid=True)
    K_hat = int(np.flatnonzero(bad)[-1]) + 1
    return TransientEstimate(K_hat=K_hat, c=c, valid=K_hat < dec.size)


def running_min(curve: np.ndarray) -> np.ndarray:
    """Prefix minimum (the usual nonconvex progress statistic)."""
    return np.minimum.accumulate(np.asarray(curve, dtype=float))

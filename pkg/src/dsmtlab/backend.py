"""Backend selection: compiled window kernel with a pure-Python fallback.

The compiled extension (``dsmtlab._speedups``) advances whole recording
windows in C; the pure-Python runner in :mod:`dsmtlab.optimizers` is the
reference implementation and the permanent fallback.  Selection happens at
import time and can be forced with the environment variable
``DSMTLAB_BACKEND``:

* ``auto`` (default): use the extension when it imported cleanly;
* ``python``: always use the reference implementation;
* ``ext``: require the extension, raise if it is unavailable.

Both backends consume per-agent random streams identically (each agent's
indices are pre-drawn for the window, which yields the same draws as
stepwise consumption), so switching backends never changes which samples a
trajectory sees; tiny floating-point differences from summation order are
possible and covered by the parity tests.
"""

from __future__ import annotations

import os

import numpy as np

from .optimizers import (AlgorithmState, DivergenceError, StepContext,
                         run_window_python)

try:
    from . import _speedups
    HAVE_EXT = True
except ImportError:
    _speedups = None
    HAVE_EXT = False

_EMPTY3 = np.zeros((0, 0, 0), dtype=np.int64)


class BackendError(RuntimeError):
    """Requested backend unavailable or misconfigured."""


def active_backend() -> str:
    """Resolve ``DSMTLAB_BACKEND`` to the backend used for new windows."""
    mode = os.environ.get("DSMTLAB_BACKEND", "auto").strip().lower()
    if mode not in ("auto", "python", "ext"):
        raise BackendError(
            f"DSMTLAB_BACKEND must be auto, python, or ext, got {mode!r}")
    if mode == "ext" and not HAVE_EXT:
        raise BackendError(
            "DSMTLAB_BACKEND=ext but the compiled extension is not available")
    if mode == "auto":
        return "ext" if HAVE_EXT else "python"
    return mode


def run_window(state: AlgorithmState, ctx: StepContext, steps: int
               ) -> tuple[AlgorithmState, np.ndarray, np.ndarray]:
    """Advance ``steps`` iterations on the active backend.

    Same contract as :func:`optimizers.run_window_python`: returns the new
    state plus per-step mean-iterate and mean-gradient traces, raising
    :class:`DivergenceError` at the first non-finite iterate.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if active_backend() == "python":
        return run_window_python(state, ctx, steps)
    return _run_window_ext(state, ctx, steps)


def _work(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=float).copy() if arr.size \
        else np.zeros((0, 0))


def _run_window_ext(state: AlgorithmState, ctx: StepContext, steps: int
                    ) -> tuple[AlgorithmState, np.ndarray, np.ndarray]:
    suite = ctx.suite
    n, p = state.n, state.dim
    if ctx.batch_size == "full":
        B = 0
        idx = _EMPTY3
    else:
        B = int(ctx.batch_size)
        idx = np.empty((n, steps, B), dtype=np.int64)
        for i in range(n):
            idx[i] = ctx.rngs[i].integers(0, suite.shard_size(i),
                                          size=(steps, B))
    kind, reg = _speedups.KIND_CODES[suite.kind]
    wt = (suite.sample_weights if suite.sample_weights is not None
          else np.zeros(0))
    W = (np.ascontiguousarray(ctx.mixing.W) if ctx.mixing is not None
         else np.zeros((0, 0)))
    eta = ctx.lca.eta_w if ctx.lca is not None else 0.0

    work = {name: _work(getattr(state, name))
            for name in ("x", "x_l", "y", "y_l", "z", "z_prev", "x_prev",
                         "g_last", "g_prev")}
    xbar = np.empty((steps, p))
    gbar = np.empty((steps, p))
    rc = _speedups.run_window(
        _speedups.VARIANT_CODES[state.variant], state.k,
        work["x"], work["x_l"], work["y"], work["y_l"], work["z"],
        work["z_prev"], work["x_prev"], work["g_last"], work["g_prev"],
        W, eta, ctx.hp.alpha, ctx.hp.beta, ctx.hb_beta,
        kind, reg, suite.reg_weight,
        suite.M, np.ascontiguousarray(suite.aux),
        np.ascontiguousarray(wt),
        np.ascontiguousarray(suite.shard_ptr, dtype=np.int64),
        idx, B, xbar, gbar)
    if rc:
        raise DivergenceError(state.k + rc, state.variant)
    new_fields = {name: (arr if arr.size else getattr(state, name))
                  for name, arr in work.items()}
    new_state = AlgorithmState(variant=state.variant, k=state.k + steps,
                               g_bar_last=gbar[-1].copy(), **new_fields)
    return new_state, xbar, gbar

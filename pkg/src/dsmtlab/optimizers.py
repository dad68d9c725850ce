"""Decentralized stochastic optimizer steps and stepsize selectors.

Every variant advances an :class:`AlgorithmState` through a pure transition
``state -> state'`` driven by a :class:`StepContext`; all randomness flows
through the context's per-agent generators, so a (state, context, stream)
triple pins the trajectory.  One step consumes exactly one gradient batch
per agent (drawn *after* the communication update, at the new iterate), and
DSMT additionally performs exactly two augmented consensus multiplications.

Variants
--------
``DSMT``        momentum tracking plus accelerated consensus (the lab's
                primary method): both the iterate pair and the tracker pair
                ride the augmented operator.
``DSMT_noLCA``  momentum tracking with a single plain gossip multiply.
``DSGT``        stochastic gradient tracking.
``DSGD``        plain decentralized SGD.
``ED``          exact-diffusion correction with a plain first step.
``DSGT_HB``     DSGT plus a heavy-ball term ``hb_beta * (x - x_prev)``.
``CSGD``        centralized SGD on the pooled objective (mean trajectory).
``CSGDM``       centralized SGD with the same momentum averaging as DSMT.

Tracker updates are grouped as ``(y - z_old) + z_new``: algebraically the
usual form, but exact in floating point when ``y == z_old``, which keeps
the single-agent reductions (DSMT == CSGDM, DSGT == CSGD, DSGD == CSGD at
``n = 1``) bitwise in deterministic mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .oracles import ObjectiveSuite
from .topology import LCA_C0, LcaOperator, MixingMatrix, lca_apply

VARIANTS = ("DSMT", "DSMT_noLCA", "DSGT", "DSGD", "ED", "DSGT_HB",
            "CSGD", "CSGDM")
CENTRALIZED_VARIANTS = ("CSGD", "CSGDM")
MOMENTUM_VARIANTS = ("DSMT", "DSMT_noLCA", "CSGDM")
TRACKING_VARIANTS = ("DSMT", "DSMT_noLCA", "DSGT", "DSGT_HB")


class OptimizerError(ValueError):
    """Inconsistent hyper-parameters, state, or context."""


class DivergenceError(RuntimeError):
    """A non-finite iterate appeared; carries the offending iteration."""

    def __init__(self, k: int, variant: str):
        super().__init__(f"{variant} produced a non-finite iterate at k={k}")
        self.k = k
        self.variant = variant


@dataclass(frozen=True)
class HyperParams:
    """Stepsize, momentum, and horizon for one algorithm run."""

    alpha: float
    beta: float = 0.0
    K: int = 1

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise OptimizerError(f"alpha must be > 0, got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise OptimizerError(
                f"beta must lie in [0, 1) (beta = 1 freezes the tracker), "
                f"got beta={self.beta}")
        if self.K < 1:
            raise OptimizerError(f"K must be >= 1, got {self.K}")


_EMPTY = np.zeros((0, 0))


@dataclass(frozen=True)
class AlgorithmState:
    """Full iterate state after ``k`` steps; unused fields are zero-sized.

    Field usage per variant::

        DSMT        x x_l y y_l z z_prev
        DSMT_noLCA  x     y     z z_prev
        DSGT        x     y     g_last
        DSGD        x           g_last
        ED          x x_prev    g_last g_prev
        DSGT_HB     x x_prev y  g_last
        CSGD        x           g_last            (single row)
        CSGDM       x           z z_prev          (single row)

    ``g_bar_last`` always holds the mean of the most recent gradient batch
    (the one drawn at the current iterate).
    """

    variant: str
    k: int
    x: np.ndarray
    g_bar_last: np.ndarray
    x_l: np.ndarray = _EMPTY
    y: np.ndarray = _EMPTY
    y_l: np.ndarray = _EMPTY
    z: np.ndarray = _EMPTY
    z_prev: np.ndarray = _EMPTY
    x_prev: np.ndarray = _EMPTY
    g_last: np.ndarray = _EMPTY
    g_prev: np.ndarray = _EMPTY

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class StepContext:
    """Everything a step needs besides the state itself.

    ``lca`` must be present exactly for DSMT; ``mixing`` must be absent for
    centralized variants (enforced by :func:`init_state`).  ``rngs`` holds
    one generator per agent (a single generator for centralized variants).
    """

    suite: ObjectiveSuite
    hp: HyperParams
    rngs: Sequence[np.random.Generator]
    mixing: MixingMatrix | None = None
    lca: LcaOperator | None = None
    batch_size: int | str = 1
    hb_beta: float = 0.9


def _draw_index_block(ctx: StepContext) -> np.ndarray | None:
    """One per-agent batch of shard-local sample indices (None = full)."""
    if ctx.batch_size == "full":
        return None
    n = ctx.suite.n_agents
    B = int(ctx.batch_size)
    idx = np.empty((n, B), dtype=np.int64)
    for i in range(n):
        idx[i] = ctx.rngs[i].integers(0, ctx.suite.shard_size(i), size=B)
    return idx


def _gradients(ctx: StepContext, X: np.ndarray,
               idx: np.ndarray | None) -> np.ndarray:
    if idx is None:
        return ctx.suite.stacked_full_grads(X)
    return ctx.suite.stacked_sample_grads(X, idx)


def init_state(variant: str, x0: np.ndarray, ctx: StepContext) -> AlgorithmState:
    """Draw the initial gradient batch and assemble the k = 0 state.

    Momentum variants start the tracker at ``y = y_l = z = (1 - beta) g_0``
    with ``z_prev = 0`` (consistent with the convention ``z_{-1} = 0``);
    tracking variants start at ``y = g_0``.
    """
    if variant not in VARIANTS:
        raise OptimizerError(f"unknown variant {variant!r}")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    centralized = variant in CENTRALIZED_VARIANTS
    if centralized:
        if ctx.mixing is not None:
            raise OptimizerError(f"{variant} is centralized; mixing must be absent")
        if x0.shape[0] != 1 or ctx.suite.n_agents != 1:
            raise OptimizerError(
                f"{variant} needs a single-row state over a pooled suite")
    else:
        if ctx.mixing is None:
            raise OptimizerError(f"{variant} requires a mixing matrix")
        if x0.shape[0] != ctx.mixing.n or ctx.suite.n_agents != ctx.mixing.n:
            raise OptimizerError(
                f"state rows ({x0.shape[0]}), suite agents "
                f"({ctx.suite.n_agents}) and mixing size ({ctx.mixing.n}) "
                "must agree")
    if (ctx.lca is not None) != (variant == "DSMT"):
        raise OptimizerError(
            "an LcaOperator must be supplied exactly for DSMT "
            f"(variant={variant}, lca={'present' if ctx.lca else 'absent'})")
    if len(ctx.rngs) != ctx.suite.n_agents:
        raise OptimizerError(
            f"need one rng per agent ({ctx.suite.n_agents}), got {len(ctx.rngs)}")

    g0 = _gradients(ctx, x0, _draw_index_block(ctx))
    beta = ctx.hp.beta
    fields = dict(variant=variant, k=0, x=x0, g_bar_last=g0.mean(axis=0))
    if variant in ("DSMT", "DSMT_noLCA", "CSGDM"):
        z0 = (1.0 - beta) * g0
        fields.update(y=z0.copy(), z=z0, z_prev=np.zeros_like(z0))
        if variant == "DSMT":
            fields.update(x_l=x0.copy(), y_l=z0.copy())
        if variant == "CSGDM":
            fields.update(y=_EMPTY)
    elif variant in ("DSGT", "DSGT_HB"):
        fields.update(y=g0.copy(), g_last=g0)
        if variant == "DSGT_HB":
            fields.update(x_prev=x0.copy())
    elif variant == "DSGD":
        fields.update(g_last=g0)
    elif variant == "ED":
        fields.update(g_last=g0, g_prev=g0.copy(), x_prev=x0.copy())
    elif variant == "CSGD":
        fields.update(g_last=g0)
    return AlgorithmState(**fields)


def _advance(state: AlgorithmState, ctx: StepContext,
             idx: np.ndarray | None) -> AlgorithmState:
    """One transition of any variant, given pre-drawn sample indices."""
    hp = ctx.hp
    alpha, beta = hp.alpha, hp.beta
    v = state.variant
    W = ctx.mixing.W if ctx.mixing is not None else None
    y_new = None
    fields: dict = {}

    if v == "DSMT":
        eta = ctx.lca.eta_w
        x_half = state.x - alpha * state.y
        xl_half = state.x_l - alpha * state.y
        x_new, xl_new = lca_apply(W, eta, x_half, xl_half)
        g = _gradients(ctx, x_new, idx)
        z_new = beta * state.z + (1.0 - beta) * g
        y_half = (state.y - state.z) + z_new
        yl_half = (state.y_l - state.z) + z_new
        y_new, yl_new = lca_apply(W, eta, y_half, yl_half)
        fields = dict(x=x_new, x_l=xl_new, y=y_new, y_l=yl_new,
                      z=z_new, z_prev=state.z)
    elif v == "DSMT_noLCA":
        x_new = W @ (state.x - alpha * state.y)
        g = _gradients(ctx, x_new, idx)
        z_new = beta * state.z + (1.0 - beta) * g
        y_new = W @ ((state.y - state.z) + z_new)
        fields = dict(x=x_new, y=y_new, z=z_new, z_prev=state.z)
    elif v == "DSGT":
        x_new = W @ (state.x - alpha * state.y)
        g = _gradients(ctx, x_new, idx)
        y_new = W @ ((state.y - state.g_last) + g)
        fields = dict(x=x_new, y=y_new, g_last=g)
    elif v == "DSGD":
        x_new = W @ (state.x - alpha * state.g_last)
        g = _gradients(ctx, x_new, idx)
        fields = dict(x=x_new, g_last=g)
    elif v == "ED":
        if state.k == 0:
            x_new = W @ (state.x - alpha * state.g_last)
        else:
            x_new = W @ ((2.0 * state.x - state.x_prev)
                         - alpha * (state.g_last - state.g_prev))
        g = _gradients(ctx, x_new, idx)
        fields = dict(x=x_new, x_prev=state.x, g_last=g, g_prev=state.g_last)
    elif v == "DSGT_HB":
        x_new = (W @ (state.x - alpha * state.y)
                 + ctx.hb_beta * (state.x - state.x_prev))
        g = _gradients(ctx, x_new, idx)
        y_new = W @ ((state.y - state.g_last) + g)
        fields = dict(x=x_new, x_prev=state.x, y=y_new, g_last=g)
    elif v == "CSGD":
        x_new = state.x - alpha * state.g_last
        g = _gradients(ctx, x_new, idx)
        fields = dict(x=x_new, g_last=g)
    elif v == "CSGDM":
        x_new = state.x - alpha * state.z
        g = _gradients(ctx, x_new, idx)
        z_new = beta * state.z + (1.0 - beta) * g
        fields = dict(x=x_new, z=z_new, z_prev=state.z)
    else:
        raise OptimizerError(f"unknown variant {v!r}")

    if not np.isfinite(x_new).all() or (
            y_new is not None and not np.isfinite(y_new).all()):
        raise DivergenceError(state.k + 1, v)
    return replace(state, k=state.k + 1, g_bar_last=g.mean(axis=0), **fields)


def dsmt_step(state: AlgorithmState, ctx: StepContext) -> AlgorithmState:
    """One DSMT iteration: descend, accelerate-mix, sample, track, mix."""
    if state.variant != "DSMT":
        raise OptimizerError(f"dsmt_step got a {state.variant} state")
    return _advance(state, ctx, _draw_index_block(ctx))


def smt_step(state: AlgorithmState, ctx: StepContext) -> AlgorithmState:
    """One momentum-tracking iteration with plain gossip (DSMT_noLCA)."""
    if state.variant != "DSMT_noLCA":
        raise OptimizerError(f"smt_step got a {state.variant} state")
    return _advance(state, ctx, _draw_index_block(ctx))


def dsgt_step(state: AlgorithmState, ctx: StepContext) -> AlgorithmState:
    """One stochastic-gradient-tracking iteration."""
    if state.variant != "DSGT":
        raise OptimizerError(f"dsgt_step got a {state.variant} state")
    return _advance(state, ctx, _draw_index_block(ctx))


def baseline_step(state: AlgorithmState, ctx: StepContext) -> AlgorithmState:
    """One iteration of DSGD, ED, DSGT_HB, CSGD, or CSGDM."""
    if state.variant not in ("DSGD", "ED", "DSGT_HB", "CSGD", "CSGDM"):
        raise OptimizerError(f"baseline_step got a {state.variant} state")
    return _advance(state, ctx, _draw_index_block(ctx))


def step(state: AlgorithmState, ctx: StepContext) -> AlgorithmState:
    """Variant-dispatching single step."""
    return _advance(state, ctx, _draw_index_block(ctx))


def run_window_python(state: AlgorithmState, ctx: StepContext, steps: int
                      ) -> tuple[AlgorithmState, np.ndarray, np.ndarray]:
    """Advance ``steps`` iterations, tracing mean iterate and mean gradient.

    Returns ``(state', xbar_trace, gbar_trace)`` with one trace row per
    completed step (the row for step ``j`` holds the means *after* that
    step).  Raises :class:`DivergenceError` as soon as an iterate goes
    non-finite.
    """
    p = state.dim
    xbar = np.empty((steps, p))
    gbar = np.empty((steps, p))
    for s in range(steps):
        state = _advance(state, ctx, _draw_index_block(ctx))
        xbar[s] = state.x.mean(axis=0)
        gbar[s] = state.g_bar_last
    return state, xbar, gbar


# -- state snapshots ---------------------------------------------------------

_STATE_FIELDS = ("x", "x_l", "y", "y_l", "z", "z_prev", "x_prev",
                 "g_last", "g_prev")


def save_state(directory, state: AlgorithmState) -> None:
    """Write a state snapshot as plain-text matrices (one file per field)."""
    import os

    from . import textio
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "meta.txt"), "w", encoding="ascii") as fh:
        fh.write(f"variant = {state.variant}\nk = {state.k}\n")
    textio.write_matrix(os.path.join(directory, "g_bar_last.txt"),
                        state.g_bar_last)
    for name in _STATE_FIELDS:
        arr = getattr(state, name)
        if arr.size:
            textio.write_matrix(os.path.join(directory, f"{name}.txt"), arr)


def load_state(directory) -> AlgorithmState:
    """Read back a snapshot written by :func:`save_state`."""
    import os

    from . import textio
    meta = {}
    with open(os.path.join(directory, "meta.txt"), encoding="ascii") as fh:
        for line in fh:
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    fields = dict(variant=meta["variant"], k=int(meta["k"]),
                  g_bar_last=textio.read_matrix(
                      os.path.join(directory, "g_bar_last.txt"))[0])
    for name in _STATE_FIELDS:
        path = os.path.join(directory, f"{name}.txt")
        if os.path.exists(path):
            fields[name] = textio.read_matrix(path)
    return AlgorithmState(**fields)


# -- theorem-driven stepsize selection ---------------------------------------

@dataclass(frozen=True)
class ParamSelection:
    """Outcome of a theorem-mode stepsize selection.

    ``alpha`` is the admissible (clamped) value actually recommended;
    ``alpha_formula`` is the horizon-dependent formula value before
    clamping; ``active`` names whichever of ``formula`` or the admissibility
    bounds produced ``alpha``; ``bounds`` reports every bound by name.
    """

    alpha: float
    beta: float
    K: int
    alpha_formula: float
    bounds: dict[str, float] = field(default_factory=dict)
    active: str = "formula"


def _require_positive(**kwargs):
    for name, value in kwargs.items():
        if not value > 0:
            raise OptimizerError(f"constant {name} must be positive, got {value}")


def _require_nonnegative(**kwargs):
    for name, value in kwargs.items():
        if value < 0:
            raise OptimizerError(f"constant {name} must be >= 0, got {value}")


def select_params_ncvx(*, L: float, C: float, sigma: float,
                       sigma_f_star: float, delta0: float, K: int,
                       n: int, rho_w: float) -> ParamSelection:
    """Horizon-aware stepsize and momentum for the nonconvex regime.

    ``beta = 1 - (1 - rho_w) / n^(1/3)``; alpha follows the closed-form
    horizon rule and is clamped to the admissibility bounds, with the active
    constraint reported by name.
    """
    _require_positive(L=L, delta0=delta0, K=K, n=n)
    _require_nonnegative(C=C, sigma=sigma, sigma_f_star=sigma_f_star)
    if not 0.0 <= rho_w < 1.0:
        raise OptimizerError(f"rho_w must lie in [0, 1), got {rho_w}")
    c0 = LCA_C0
    gap = 1.0 - rho_w
    beta = 1.0 - gap / n ** (1.0 / 3.0)
    one_minus_beta = gap / n ** (1.0 / 3.0)
    noise = 2.0 * C * sigma_f_star + sigma ** 2

    gamma = ((4032.0 * c0 ** 2 * L ** 2 * (C + L)
              / (n ** (1.0 / 3.0) * gap ** 2)) ** (1.0 / 3.0)
             + 24.0 * c0 * n ** (1.0 / 3.0) * (L + C) / gap
             + math.sqrt(8.0 * C * L * K / n)
             + (480.0 * c0 ** 2 * C * L ** 2 * K
                / (n ** (2.0 / 3.0) * gap)) ** (1.0 / 3.0))
    alpha_formula = 1.0 / (math.sqrt(L * noise * K / (3.0 * n * delta0)) + gamma)

    bounds = {
        "consensus": math.sqrt(gap ** 2 / (240.0 * c0 ** 2 * L * (L + C))),
        "momentum": one_minus_beta / (24.0 * (L + C)),
        "tracking": (gap ** 3 / (4032.0 * c0 ** 2 * one_minus_beta
                                 * L ** 2 * (C + L))) ** (1.0 / 3.0),
        "noise_sqrt": (math.sqrt(n / (8.0 * C * L * K))
                       if C > 0 else math.inf),
        "noise_cbrt": ((gap ** 3 / (480.0 * c0 ** 2 * C * L ** 2
                                    * one_minus_beta ** 2 * K)) ** (1.0 / 3.0)
                       if C > 0 else math.inf),
    }
    candidates = {"formula": alpha_formula, **bounds}
    active = min(candidates, key=candidates.get)
    return ParamSelection(alpha=candidates[active], beta=beta, K=K,
                          alpha_formula=alpha_formula, bounds=bounds,
                          active=active)


def select_params_pl(*, L: float, C: float, sigma: float,
                     sigma_f_star: float, mu: float, lyapunov0: float,
                     K: int, n: int, rho_w: float) -> ParamSelection:
    """Horizon-aware stepsize and momentum for the PL / strongly convex regime.

    ``beta = 1 - (1 - rho_w) / sqrt(n)`` (requires ``n >= 2``); the formula
    alpha is logarithmic in the horizon and needs the log argument to exceed
    one, otherwise the horizon is too short and an error says so.
    """
    _require_positive(L=L, mu=mu, lyapunov0=lyapunov0, K=K)
    _require_nonnegative(C=C, sigma=sigma, sigma_f_star=sigma_f_star)
    if n < 2:
        raise OptimizerError(f"PL-mode selection requires n >= 2, got {n}")
    if not 0.0 <= rho_w < 1.0:
        raise OptimizerError(f"rho_w must lie in [0, 1), got {rho_w}")
    noise = 2.0 * C * sigma_f_star + sigma ** 2
    if noise <= 0.0:
        raise OptimizerError(
            "PL-mode selection needs 2*C*sigma_f_star + sigma^2 > 0 "
            "(noiseless problems have no horizon-dependent stepsize)")
    c0 = LCA_C0
    gap = 1.0 - rho_w
    beta = 1.0 - gap / math.sqrt(n)
    one_minus_beta = gap / math.sqrt(n)

    log_arg = 33.0 * n * mu ** 2 * K * lyapunov0 / (noise * L)
    if log_arg <= 1.0:
        raise OptimizerError(
            f"PL horizon too short: log argument {log_arg:.3e} <= 1; "
            "increase K (or reduce the noise constants)")
    alpha_formula = 4.0 / (mu * K) * math.log(log_arg)

    bounds = {
        "stability": one_minus_beta / (3.0 * mu),
        "momentum": one_minus_beta / (486.0 * c0 ** 2 * (L + C)),
        "consensus": math.sqrt(gap ** 2 / (240.0 * c0 ** 2 * L * (L + C))),
        "coupling": math.sqrt(gap / (324.0 * c0 ** 2 * (L + C) ** 2)),
        "tracking": math.sqrt(mu * one_minus_beta ** 2
                              / (960.0 * c0 ** 2 * L * (L + C) ** 2)),
    }
    candidates = {"formula": alpha_formula, **bounds}
    active = min(candidates, key=candidates.get)
    return ParamSelection(alpha=candidates[active], beta=beta, K=K,
                          alpha_formula=alpha_formula, bounds=bounds,
                          active=active)

"""Config-driven experiments: parse, resolve, run, aggregate, write.

A config is plain text, one ``key = value`` per line, ``#`` comments.  It
pins everything: topology, objective, algorithm roster, horizon, trials,
and the base seed.  :func:`parse_config` validates the whole file and
reports *all* violations at once; :func:`run_experiment` then derives every
random stream from the seed (see :mod:`dsmtlab.rng`), runs each algorithm
for the requested trials, and aggregates per-iteration metric curves
(mean and sample standard deviation across trials).  Trials that diverge
are excluded from the aggregates and counted, per algorithm, in both the
CSV header and the manifest.

Algorithm roster grammar (the ``algorithms`` value)::

    algorithms = DSMT manual alpha=0.01 beta=rho_w; DSGD manual alpha=0.01

Entries are ``VARIANT mode [alpha=...] [beta=...]`` separated by ``;``.
Modes: ``manual`` (requires ``alpha``; ``beta`` defaults to 0) and the
horizon-aware selectors ``theorem_ncvx``, ``theorem_pl``, and
``theorem_pl_formula``, which derive both parameters from the problem
constants and forbid explicit ones.  ``theorem_pl_formula`` keeps the
logarithmic-in-horizon stepsize formula, guarded only by the mean-recursion
stability bound, so halving the horizon visibly rescales the stepsize even
at sizes where the full bound set would clamp it.  ``beta`` accepts a float
in [0, 1) or a named rule resolved against the realized topology:

    ``rho_w``      the accelerated consensus factor ``rho_tilde_w``
    ``rule_ncvx``  ``1 - (1 - rho_tilde_w) / n^(1/3)``
    ``rule_pl``    ``1 - (1 - rho_tilde_w) / sqrt(n)``
    ``rule_gap``   ``1 - sqrt((1 - lambda) / n)``

Centralized variants (CSGD, CSGDM) run on the pooled objective with batch
size ``n * batch_size`` (or ``full``), so they see the same number of
samples per iteration as the decentralized roster; their trajectory starts
at the common initial row (``init = common``) or the mean initial row
(``init = spread``).  Initial iterates are drawn once per config and shared
by every trial and algorithm.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import rng, textio
from .backend import active_backend, run_window
from .diagnostics import METRIC_NAMES, MetricsRecorder, MetricsRow, running_min
from .optimizers import (CENTRALIZED_VARIANTS, VARIANTS, DivergenceError,
                         HyperParams, ParamSelection, StepContext, init_state,
                         select_params_ncvx, select_params_pl)
from .oracles import ObjectiveSuite, OracleError, generate_synthetic, \
    make_quadratic_suite, partition_heterogeneous, partition_shuffled
from .topology import (GRAPH_KINDS, WEIGHT_SCHEMES, GraphSpec, LcaOperator,
                       MixingMatrix, build_graph, lca_params,
                       mixing_from_graph)

SCHEMA_VERSION = 1
PARAM_MODES = ("manual", "theorem_ncvx", "theorem_pl", "theorem_pl_formula")
BETA_RULES = ("rho_w", "rule_ncvx", "rule_pl", "rule_gap")
PROBLEM_KINDS = ("quadratic", "logistic_l2", "logistic_nonconvex")
PARTITION_KINDS = ("heterogeneous", "shuffled")
INIT_KINDS = ("common", "spread")
TRANSIENT_METRICS = ("avg_gap", "grad_norm_sq_min")

# Keep Delta_0 and Lyapunov estimates positive even when the initial point
# happens to be optimal; the selectors require strictly positive values.
_GAP_FLOOR = 1e-12

_REQUIRED = object()


class ConfigError(ValueError):
    """One or more config violations; ``errors`` lists all of them."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class HarnessError(RuntimeError):
    """A config that parses but asks for something the problem cannot give."""


@dataclass(frozen=True)
class AlgorithmSpec:
    """One roster entry: variant, parameter mode, and raw parameter tokens.

    ``beta`` keeps the literal token (float text or named rule) so configs
    round-trip exactly; it is resolved against the realized topology later.
    """

    variant: str
    mode: str
    alpha: float | None = None
    beta: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; inapplicable fields are None."""

    schema_version: int
    topology: str
    n: int
    scheme: str
    lazy: bool
    problem: str
    dim: int
    algorithms: tuple[AlgorithmSpec, ...]
    batch_size: int | str
    K: int
    trials: int
    seed: int
    record_every: int
    init: str
    init_scale: float
    hb_beta: float
    transient_metric: str
    p_edge: float | None = None
    edges: tuple[tuple[int, int], ...] | None = None
    rows_per_agent: int | None = None
    heterogeneity: float | None = None
    noise: float | None = None
    n_samples: int | None = None
    separation: float | None = None
    reg_weight: float | None = None
    partition: str | None = None
    C_override: float | None = None
    sigma_override: float | None = None


# -- parsing -----------------------------------------------------------------

class _Fields:
    """Raw key/value store with typed, error-collecting extraction."""

    def __init__(self, raw: dict[str, str], errors: list[str]):
        self.raw = raw
        self.errors = errors
        self.consumed: set[str] = set()

    def take_raw(self, key: str, default):
        self.consumed.add(key)
        if key in self.raw:
            return self.raw[key]
        if default is _REQUIRED:
            self.errors.append(f"{key}: required key is missing")
        return default

    def take_int(self, key: str, default=_REQUIRED, minimum: int | None = None):
        val = self.take_raw(key, default)
        if not isinstance(val, str):
            return None if val is _REQUIRED else val
        try:
            parsed = int(val)
        except ValueError:
            self.errors.append(f"{key}: expected an integer, got {val!r}")
            return None
        if minimum is not None and parsed < minimum:
            self.errors.append(f"{key}: must be >= {minimum}, got {parsed}")
            return None
        return parsed

    def take_float(self, key: str, default=_REQUIRED, minimum: float | None = None,
                   exclusive: bool = False):
        val = self.take_raw(key, default)
        if not isinstance(val, str):
            return None if val is _REQUIRED else val
        try:
            parsed = float(val)
        except ValueError:
            self.errors.append(f"{key}: expected a number, got {val!r}")
            return None
        if not math.isfinite(parsed):
            self.errors.append(f"{key}: must be finite, got {val!r}")
            return None
        if minimum is not None:
            if exclusive and not parsed > minimum:
                self.errors.append(f"{key}: must be > {minimum}, got {val}")
                return None
            if not exclusive and parsed < minimum:
                self.errors.append(f"{key}: must be >= {minimum}, got {val}")
                return None
        return parsed

    def take_choice(self, key: str, choices: tuple[str, ...], default=_REQUIRED):
        val = self.take_raw(key, default)
        if not isinstance(val, str):
            return None if val is _REQUIRED else val
        if val not in choices:
            self.errors.append(
                f"{key}: expected one of {', '.join(choices)}, got {val!r}")
            return None
        return val

    def take_bool(self, key: str, default=_REQUIRED):
        val = self.take_raw(key, default)
        if not isinstance(val, str):
            return None if val is _REQUIRED else val
        if val not in ("true", "false"):
            self.errors.append(f"{key}: expected true or false, got {val!r}")
            return None
        return val == "true"

    def reject_unless(self, key: str, applicable: bool, context: str):
        """Flag a present key that does not apply to this config."""
        if not applicable and key in self.raw:
            self.errors.append(f"{key}: only applies to {context}")
            self.consumed.add(key)
            return True
        return False

    def unknown(self) -> list[str]:
        return sorted(set(self.raw) - self.consumed)


def _parse_edges(text: str, errors: list[str]):
    """Parse ``0-1,1-2,...`` into an edge tuple."""
    edges = []
    for part in text.split(","):
        part = part.strip()
        u, sep, v = part.partition("-")
        try:
            if not sep:
                raise ValueError
            edges.append((int(u), int(v)))
        except ValueError:
            errors.append(f"edges: expected pairs like 0-1,1-2, got {part!r}")
            return None
    if not edges:
        errors.append("edges: need at least one pair")
        return None
    return tuple(edges)


def _parse_beta_token(token: str, where: str, errors: list[str]) -> str | None:
    if token in BETA_RULES:
        return token
    try:
        value = float(token)
    except ValueError:
        errors.append(
            f"algorithms: {where}: beta must be a float in [0, 1) or one of "
            f"{', '.join(BETA_RULES)}, got {token!r}")
        return None
    if not 0.0 <= value < 1.0:
        errors.append(
            f"algorithms: {where}: beta must lie in [0, 1), got {token}")
        return None
    return token


def _parse_algorithms(text: str, errors: list[str]):
    specs = []
    entries = [e.strip() for e in text.split(";") if e.strip()]
    if not entries:
        errors.append("algorithms: need at least one entry")
        return ()
    for entry in entries:
        tokens = entry.split()
        if len(tokens) < 2:
            errors.append(
                f"algorithms: {entry!r}: expected 'VARIANT mode [key=value ...]'")
            continue
        variant, mode = tokens[0], tokens[1]
        ok = True
        if variant not in VARIANTS:
            errors.append(
                f"algorithms: unknown variant {variant!r}; expected one of "
                f"{', '.join(VARIANTS)}")
            ok = False
        if mode not in PARAM_MODES:
            errors.append(
                f"algorithms: {variant}: unknown mode {mode!r}; expected one "
                f"of {', '.join(PARAM_MODES)}")
            ok = False
        kv: dict[str, str] = {}
        for token in tokens[2:]:
            key, sep, value = token.partition("=")
            if not sep or not key or not value:
                errors.append(
                    f"algorithms: {variant}: expected key=value, got {token!r}")
                ok = False
                continue
            if key in kv:
                errors.append(f"algorithms: {variant}: duplicate key {key!r}")
                ok = False
            kv[key] = value
        for key in sorted(set(kv) - {"alpha", "beta"}):
            errors.append(
                f"algorithms: {variant}: unknown key {key!r} (alpha, beta)")
            ok = False
        if not ok:
            continue
        alpha = None
        beta = kv.get("beta")
        if mode == "manual":
            if "alpha" not in kv:
                errors.append(f"algorithms: {variant}: manual mode requires alpha")
                continue
            try:
                alpha = float(kv["alpha"])
            except ValueError:
                errors.append(
                    f"algorithms: {variant}: alpha must be a number, got "
                    f"{kv['alpha']!r}")
                continue
            if not (math.isfinite(alpha) and alpha > 0.0):
                errors.append(
                    f"algorithms: {variant}: alpha must be positive and "
                    f"finite, got {kv['alpha']}")
                continue
            beta = _parse_beta_token(beta if beta is not None else "0",
                                     variant, errors)
            if beta is None:
                continue
        else:
            if "alpha" in kv or "beta" in kv:
                errors.append(
                    f"algorithms: {variant}: {mode} derives alpha and beta; "
                    "drop the explicit values")
                continue
        specs.append(AlgorithmSpec(variant=variant, mode=mode,
                                   alpha=alpha, beta=beta))
    return tuple(specs)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; raises :class:`ConfigError` with the
    complete list of violations, never just the first one."""
    errors: list[str] = []
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key or not value:
            errors.append(f"line {lineno}: expected 'key = value', got {stripped!r}")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = value

    f = _Fields(raw, errors)

    schema_version = f.take_int("schema_version")
    if schema_version is not None and schema_version != SCHEMA_VERSION:
        errors.append(f"schema_version: this build reads version "
                      f"{SCHEMA_VERSION}, got {schema_version}")

    topology = f.take_choice("topology", GRAPH_KINDS)
    n = f.take_int("n", minimum=1)
    scheme = f.take_choice("scheme", WEIGHT_SCHEMES, default="uniform_neighbor")
    lazy = f.take_bool("lazy", default="true")

    p_edge = None
    if not f.reject_unless("p_edge", topology == "erdos_renyi",
                           "topology = erdos_renyi"):
        if topology == "erdos_renyi":
            p_edge = f.take_float("p_edge", minimum=0.0, exclusive=True)
            if p_edge is not None and p_edge > 1.0:
                errors.append(f"p_edge: must lie in (0, 1], got {p_edge}")
                p_edge = None

    edges = None
    if not f.reject_unless("edges", topology == "custom", "topology = custom"):
        if topology == "custom":
            edges_text = f.take_raw("edges", _REQUIRED)
            if isinstance(edges_text, str):
                edges = _parse_edges(edges_text, errors)

    problem = f.take_choice("problem", PROBLEM_KINDS)
    dim = f.take_int("dim", minimum=1)
    quadratic = problem == "quadratic"
    logistic = problem in ("logistic_l2", "logistic_nonconvex")

    rows_per_agent = heterogeneity = noise = None
    if not f.reject_unless("rows_per_agent", quadratic, "problem = quadratic"):
        if quadratic:
            rows_per_agent = f.take_int("rows_per_agent", minimum=1)
    if not f.reject_unless("heterogeneity", quadratic, "problem = quadratic"):
        if quadratic:
            heterogeneity = f.take_float("heterogeneity", default="1.0", minimum=0.0)
    if not f.reject_unless("noise", quadratic, "problem = quadratic"):
        if quadratic:
            noise = f.take_float("noise", default="1.0", minimum=0.0)

    n_samples = separation = reg_weight = partition = None
    C_override = sigma_override = None
    logistic_ctx = "problem = logistic_l2 or logistic_nonconvex"
    if not f.reject_unless("n_samples", logistic, logistic_ctx):
        if logistic:
            n_samples = f.take_int("n_samples", minimum=2)
    if not f.reject_unless("separation", logistic, logistic_ctx):
        if logistic:
            separation = f.take_float("separation", default="2.0", minimum=0.0)
    if not f.reject_unless("reg_weight", logistic, logistic_ctx):
        if problem == "logistic_l2":
            reg_weight = f.take_float("reg_weight", minimum=0.0, exclusive=True)
        elif problem == "logistic_nonconvex":
            reg_weight = f.take_float("reg_weight", minimum=0.0)
    if not f.reject_unless("partition", logistic, logistic_ctx):
        if logistic:
            partition = f.take_choice("partition", PARTITION_KINDS,
                                      default="heterogeneous")
    if not f.reject_unless("C_override", logistic, logistic_ctx):
        if logistic:
            C_override = f.take_float("C_override", default=None, minimum=0.0)
    if not f.reject_unless("sigma_override", logistic, logistic_ctx):
        if logistic:
            sigma_override = f.take_float("sigma_override", default=None,
                                          minimum=0.0)

    algorithms: tuple[AlgorithmSpec, ...] = ()
    algo_text = f.take_raw("algorithms", _REQUIRED)
    if isinstance(algo_text, str):
        algorithms = _parse_algorithms(algo_text, errors)

    batch_text = f.take_raw("batch_size", "1")
    batch_size: int | str | None = None
    if isinstance(batch_text, str):
        if batch_text == "full":
            batch_size = "full"
        else:
            try:
                batch_size = int(batch_text)
            except ValueError:
                errors.append(
                    f"batch_size: expected a positive integer or 'full', got "
                    f"{batch_text!r}")
            else:
                if batch_size < 1:
                    errors.append(f"batch_size: must be >= 1, got {batch_size}")
                    batch_size = None

    K = f.take_int("K", minimum=1)
    trials = f.take_int("trials", default="1", minimum=1)
    seed = f.take_int("seed", minimum=0)
    record_every = f.take_int("record_every", default="10", minimum=1)
    init = f.take_choice("init", INIT_KINDS, default="common")
    init_scale = f.take_float("init_scale", default="1.0", minimum=0.0)
    hb_beta = f.take_float("hb_beta", default="0.9", minimum=0.0)
    if hb_beta is not None and hb_beta >= 1.0:
        errors.append(f"hb_beta: must lie in [0, 1), got {hb_beta}")
        hb_beta = None
    transient_metric = f.take_choice("transient_metric", TRANSIENT_METRICS,
                                     default="avg_gap")

    for key in f.unknown():
        errors.append(f"{key}: unknown key")

    if logistic and n_samples is not None and n is not None and n_samples < n:
        errors.append(
            f"n_samples: every agent needs at least one sample "
            f"(n_samples = {n_samples} < n = {n})")
    if problem == "logistic_nonconvex":
        for spec in algorithms:
            if spec.mode in ("theorem_pl", "theorem_pl_formula"):
                errors.append(
                    f"algorithms: {spec.variant}: {spec.mode} needs a "
                    "gradient-dominated problem; logistic_nonconvex is not")
    if n == 1:
        for spec in algorithms:
            if spec.mode in ("theorem_pl", "theorem_pl_formula"):
                errors.append(
                    f"algorithms: {spec.variant}: {spec.mode} requires n >= 2")

    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        schema_version=schema_version, topology=topology, n=n, scheme=scheme,
        lazy=lazy, problem=problem, dim=dim, algorithms=algorithms,
        batch_size=batch_size, K=K, trials=trials, seed=seed,
        record_every=record_every, init=init, init_scale=init_scale,
        hb_beta=hb_beta, transient_metric=transient_metric, p_edge=p_edge,
        edges=edges, rows_per_agent=rows_per_agent,
        heterogeneity=heterogeneity, noise=noise, n_samples=n_samples,
        separation=separation, reg_weight=reg_weight, partition=partition,
        C_override=C_override, sigma_override=sigma_override)


def parse_config_file(path) -> ExperimentConfig:
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())


def serialize_algorithms(specs: tuple[AlgorithmSpec, ...]) -> str:
    parts = []
    for spec in specs:
        tokens = [spec.variant, spec.mode]
        if spec.alpha is not None:
            tokens.append(f"alpha={spec.alpha!r}")
        if spec.beta is not None:
            tokens.append(f"beta={spec.beta}")
        parts.append(" ".join(tokens))
    return "; ".join(parts)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config back to canonical text; round-trips through
    :func:`parse_config` to an equal dataclass."""
    lines = []

    def put(key: str, value):
        if value is None:
            return
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")

    put("schema_version", cfg.schema_version)
    put("topology", cfg.topology)
    put("n", cfg.n)
    put("scheme", cfg.scheme)
    put("lazy", cfg.lazy)
    put("p_edge", cfg.p_edge)
    if cfg.edges is not None:
        put("edges", ",".join(f"{u}-{v}" for u, v in cfg.edges))
    put("problem", cfg.problem)
    put("dim", cfg.dim)
    put("rows_per_agent", cfg.rows_per_agent)
    put("heterogeneity", cfg.heterogeneity)
    put("noise", cfg.noise)
    put("n_samples", cfg.n_samples)
    put("separation", cfg.separation)
    put("reg_weight", cfg.reg_weight)
    put("partition", cfg.partition)
    put("C_override", cfg.C_override)
    put("sigma_override", cfg.sigma_override)
    put("algorithms", serialize_algorithms(cfg.algorithms))
    put("batch_size", cfg.batch_size)
    put("K", cfg.K)
    put("trials", cfg.trials)
    put("seed", cfg.seed)
    put("record_every", cfg.record_every)
    put("init", cfg.init)
    put("init_scale", cfg.init_scale)
    put("hb_beta", cfg.hb_beta)
    put("transient_metric", cfg.transient_metric)
    return "\n".join(lines) + "\n"


# -- problem construction ----------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """Everything derived from (config, seed) that trials share."""

    suite: ObjectiveSuite
    pooled_suite: ObjectiveSuite
    mixing: MixingMatrix
    lca: LcaOperator | None
    x0: np.ndarray
    x0_center: np.ndarray
    f_star: float | None
    spectra: dict[str, float]

    @property
    def xbar0(self) -> np.ndarray:
        return self.x0.mean(axis=0)


def build_suite(cfg: ExperimentConfig) -> ObjectiveSuite:
    """Instantiate the objective from the config's data stream."""
    stream = rng.data_rng(cfg.seed)
    if cfg.problem == "quadratic":
        return make_quadratic_suite(cfg.n, cfg.rows_per_agent, cfg.dim,
                                    cfg.heterogeneity, cfg.noise, stream)
    dataset = generate_synthetic(cfg.n_samples, cfg.dim, cfg.separation, stream)
    if cfg.partition == "heterogeneous":
        part = partition_heterogeneous(dataset, cfg.n)
    else:
        part = partition_shuffled(dataset, cfg.n, stream)
    regularizer = "l2" if cfg.problem == "logistic_l2" else "nonconvex"
    return ObjectiveSuite.logistic(dataset, part, regularizer=regularizer,
                                   weight=cfg.reg_weight, C=cfg.C_override,
                                   sigma=cfg.sigma_override)


def config_spectra(cfg: ExperimentConfig) -> dict[str, float]:
    """Realize the topology and report its consensus spectrum."""
    graph = build_graph(GraphSpec(cfg.topology, cfg.n, p_edge=cfg.p_edge,
                                  edges=cfg.edges), rng.graph_rng(cfg.seed))
    mixing = mixing_from_graph(graph, cfg.scheme, cfg.lazy)
    eta_w, rho_tilde_w = lca_params(mixing.lam)
    return {"lambda": mixing.lam, "one_minus_lambda": mixing.gap,
            "eta_w": eta_w, "rho_tilde_w": rho_tilde_w}


def build_problem(cfg: ExperimentConfig) -> Problem:
    """Realize topology, objective, and shared initial iterates."""
    graph = build_graph(GraphSpec(cfg.topology, cfg.n, p_edge=cfg.p_edge,
                                  edges=cfg.edges), rng.graph_rng(cfg.seed))
    mixing = mixing_from_graph(graph, cfg.scheme, cfg.lazy)
    eta_w, rho_tilde_w = lca_params(mixing.lam)
    spectra = {"lambda": mixing.lam, "one_minus_lambda": mixing.gap,
               "eta_w": eta_w, "rho_tilde_w": rho_tilde_w}
    lca = None
    if any(spec.variant == "DSMT" for spec in cfg.algorithms):
        lca = LcaOperator(mixing=mixing)

    suite = build_suite(cfg)
    init_stream = rng.init_rng(cfg.seed)
    if cfg.init == "common":
        row = cfg.init_scale * init_stream.standard_normal(cfg.dim)
        x0 = np.tile(row, (cfg.n, 1))
        x0_center = row.copy()
    else:
        x0 = cfg.init_scale * init_stream.standard_normal((cfg.n, cfg.dim))
        x0_center = x0.mean(axis=0)
    f_star = suite.f_star
    pooled = suite.pooled()
    return Problem(suite=suite, pooled_suite=pooled, mixing=mixing, lca=lca,
                   x0=x0, x0_center=x0_center, f_star=f_star, spectra=spectra)


# -- parameter resolution ----------------------------------------------------

@dataclass(frozen=True)
class ResolvedAlgorithm:
    """A roster entry with concrete hyper-parameters for one problem."""

    label: str
    variant: str
    mode: str
    hp: HyperParams
    beta_spec: str | None
    batch_size: int | str
    centralized: bool
    active: str | None = None
    selection: ParamSelection | None = None


def resolve_beta(token: str, n: int, lam: float, rho_tilde_w: float) -> float:
    """Turn a beta token (float text or named rule) into a value."""
    if token == "rho_w":
        return rho_tilde_w
    if token == "rule_ncvx":
        return 1.0 - (1.0 - rho_tilde_w) / n ** (1.0 / 3.0)
    if token == "rule_pl":
        return 1.0 - (1.0 - rho_tilde_w) / math.sqrt(n)
    if token == "rule_gap":
        return 1.0 - math.sqrt((1.0 - lam) / n)
    return float(token)


def _sigma_f_star_for(suite: ObjectiveSuite) -> float:
    """Heterogeneity offset when the noise model needs it, else zero."""
    if suite.C == 0.0:
        return 0.0
    try:
        return suite.sigma_f_star()
    except OracleError as exc:
        raise HarnessError(
            "theorem modes need the heterogeneity offset sigma_f* when "
            f"C > 0, and this problem cannot provide it: {exc}") from exc


def resolve_algorithms(cfg: ExperimentConfig,
                       prob: Problem) -> tuple[ResolvedAlgorithm, ...]:
    """Fix every roster entry's stepsize and momentum for this problem."""
    lam = prob.spectra["lambda"]
    rho_tilde_w = prob.spectra["rho_tilde_w"]
    suite = prob.suite
    resolved = []
    for i, spec in enumerate(cfg.algorithms):
        label = f"alg{i}_{spec.variant}"
        centralized = spec.variant in CENTRALIZED_VARIANTS
        batch = cfg.batch_size
        if centralized and batch != "full":
            batch = cfg.n * batch
        active = None
        selection = None
        if spec.mode == "manual":
            beta = resolve_beta(spec.beta, cfg.n, lam, rho_tilde_w)
            hp = HyperParams(alpha=spec.alpha, beta=beta, K=cfg.K)
        else:
            fbar0 = float(suite.global_values(prob.xbar0)[0])
            base = prob.f_star if prob.f_star is not None else 0.0
            delta0 = max(fbar0 - base, _GAP_FLOOR)
            sigma_f = _sigma_f_star_for(suite)
            if spec.mode == "theorem_ncvx":
                selection = select_params_ncvx(
                    L=suite.L, C=suite.C, sigma=suite.sigma,
                    sigma_f_star=sigma_f, delta0=delta0, K=cfg.K, n=cfg.n,
                    rho_w=rho_tilde_w)
                alpha, active = selection.alpha, selection.active
            else:
                if suite.mu is None or not suite.mu > 0.0:
                    raise HarnessError(
                        f"{spec.mode} needs a positive curvature constant mu; "
                        f"this {suite.kind} problem has mu={suite.mu}")
                consensus0 = float(np.sum((prob.x0 - prob.xbar0) ** 2))
                lyap0 = max(2.0 * delta0 + suite.L ** 2 * consensus0
                            / (cfg.n * (1.0 - rho_tilde_w)), _GAP_FLOOR)
                selection = select_params_pl(
                    L=suite.L, C=suite.C, sigma=suite.sigma,
                    sigma_f_star=sigma_f, mu=suite.mu, lyapunov0=lyap0,
                    K=cfg.K, n=cfg.n, rho_w=rho_tilde_w)
                if spec.mode == "theorem_pl":
                    alpha, active = selection.alpha, selection.active
                else:
                    stability = selection.bounds["stability"]
                    if selection.alpha_formula <= stability:
                        alpha, active = selection.alpha_formula, "formula"
                    else:
                        alpha, active = stability, "stability"
            hp = HyperParams(alpha=alpha, beta=selection.beta, K=cfg.K)
        resolved.append(ResolvedAlgorithm(
            label=label, variant=spec.variant, mode=spec.mode, hp=hp,
            beta_spec=spec.beta, batch_size=batch, centralized=centralized,
            active=active, selection=selection))
    return tuple(resolved)


# -- running -----------------------------------------------------------------

@dataclass(frozen=True)
class TrialResult:
    """Recorded rows of one trial; diverged trials stop at the failure."""

    rows: tuple[MetricsRow, ...]
    status: str
    diverged_at: int | None = None


def run_trial(cfg: ExperimentConfig, prob: Problem, algo: ResolvedAlgorithm,
              trial: int) -> TrialResult:
    """One seeded trajectory of one algorithm, recorded every window."""
    if algo.centralized:
        suite = prob.pooled_suite
        mixing = None
        x0 = prob.x0_center.reshape(1, -1)
    else:
        suite = prob.suite
        mixing = prob.mixing
        x0 = prob.x0
    streams = rng.agent_rngs(cfg.seed, trial, suite.n_agents)
    ctx = StepContext(suite=suite, hp=algo.hp, rngs=streams, mixing=mixing,
                      lca=prob.lca if algo.variant == "DSMT" else None,
                      batch_size=algo.batch_size, hb_beta=cfg.hb_beta)
    state = init_state(algo.variant, x0, ctx)
    recorder = MetricsRecorder(suite, algo.hp, f_star=prob.f_star)
    rows = [recorder.record(state)]
    k = 0
    try:
        while k < cfg.K:
            steps = min(cfg.record_every, cfg.K - k)
            state, xbar_trace, gbar_trace = run_window(state, ctx, steps)
            recorder.ingest(xbar_trace, gbar_trace)
            rows.append(recorder.record(state))
            k += steps
    except DivergenceError as exc:
        return TrialResult(rows=tuple(rows), status="diverged",
                           diverged_at=exc.k)
    return TrialResult(rows=tuple(rows), status="completed")


_PROBLEM_CACHE: dict[str, tuple[ExperimentConfig, Problem]] = {}
_PROBLEM_CACHE_MAX = 4


def _cached_problem(cfg_text: str) -> tuple[ExperimentConfig, Problem]:
    hit = _PROBLEM_CACHE.get(cfg_text)
    if hit is None:
        cfg = parse_config(cfg_text)
        hit = (cfg, build_problem(cfg))
        if len(_PROBLEM_CACHE) >= _PROBLEM_CACHE_MAX:
            _PROBLEM_CACHE.pop(next(iter(_PROBLEM_CACHE)))
        _PROBLEM_CACHE[cfg_text] = hit
    return hit


def _trial_task(cfg_text: str, algo: ResolvedAlgorithm,
                trial: int) -> TrialResult:
    cfg, prob = _cached_problem(cfg_text)
    return run_trial(cfg, prob, algo, trial)


@dataclass(frozen=True)
class AlgorithmCurves:
    """Aggregated metric curves of one roster entry."""

    label: str
    variant: str
    mode: str
    alpha: float
    beta: float
    beta_spec: str | None
    batch_size: int | str
    active: str | None
    alpha_formula: float | None
    bounds: dict[str, float] | None
    ks: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    trials: int
    completed: int
    diverged: tuple[tuple[int, int], ...]

    def metric(self, name: str) -> np.ndarray:
        """Trial-mean curve of one metric by name."""
        return self.means[:, METRIC_NAMES.index(name)]

    def metric_std(self, name: str) -> np.ndarray:
        return self.stds[:, METRIC_NAMES.index(name)]


@dataclass(frozen=True)
class ExperimentResult:
    """All aggregated curves of one experiment plus shared facts."""

    config: ExperimentConfig
    spectra: dict[str, float]
    constants: dict[str, float | None]
    curves: tuple[AlgorithmCurves, ...]

    def curve(self, key: str) -> AlgorithmCurves:
        """Look up by exact label first, then by first matching variant."""
        for c in self.curves:
            if c.label == key:
                return c
        for c in self.curves:
            if c.variant == key:
                return c
        raise KeyError(f"no algorithm labeled or named {key!r}")


def _aggregate(algo: ResolvedAlgorithm, trials: int,
               results: list[TrialResult]) -> AlgorithmCurves:
    done = [t for t in results if t.status == "completed"]
    diverged = tuple((i, t.diverged_at) for i, t in enumerate(results)
                     if t.status == "diverged")
    if done:
        ks = np.array([row.k for row in done[0].rows], dtype=np.int64)
        data = np.array([[row.values() for row in t.rows] for t in done])
        means = data.mean(axis=0)
        if len(done) > 1:
            stds = data.std(axis=0, ddof=1)
        else:
            stds = np.zeros_like(means)
    else:
        ks = np.zeros(0, dtype=np.int64)
        means = np.zeros((0, len(METRIC_NAMES)))
        stds = np.zeros((0, len(METRIC_NAMES)))
    sel = algo.selection
    return AlgorithmCurves(
        label=algo.label, variant=algo.variant, mode=algo.mode,
        alpha=algo.hp.alpha, beta=algo.hp.beta, beta_spec=algo.beta_spec,
        batch_size=algo.batch_size, active=algo.active,
        alpha_formula=sel.alpha_formula if sel is not None else None,
        bounds=dict(sel.bounds) if sel is not None else None,
        ks=ks, means=means, stds=stds, trials=trials, completed=len(done),
        diverged=diverged)


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Run the full roster for all trials and aggregate the curves.

    ``workers > 1`` distributes trials over a process pool; results are
    aggregated in trial order either way, so the two paths produce
    identical output.
    """
    prob = build_problem(cfg)
    algos = resolve_algorithms(cfg, prob)
    per_algo: list[list[TrialResult]] = []
    if workers > 1 and cfg.trials * len(algos) > 1:
        cfg_text = serialize_config(cfg)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [[pool.submit(_trial_task, cfg_text, algo, trial)
                        for trial in range(cfg.trials)] for algo in algos]
            per_algo = [[f.result() for f in row] for row in futures]
    else:
        per_algo = [[run_trial(cfg, prob, algo, trial)
                     for trial in range(cfg.trials)] for algo in algos]
    curves = tuple(_aggregate(algo, cfg.trials, results)
                   for algo, results in zip(algos, per_algo))
    suite = prob.suite
    constants = {"L": suite.L, "C": suite.C, "sigma": suite.sigma,
                 "mu": suite.mu, "f_star": prob.f_star}
    return ExperimentResult(config=cfg, spectra=dict(prob.spectra),
                            constants=constants, curves=curves)


def transient_curve(curve: AlgorithmCurves, metric: str) -> np.ndarray:
    """The comparison curve named by ``transient_metric``.

    ``avg_gap`` reads the gap curve directly; ``grad_norm_sq_min`` takes the
    running minimum of the squared gradient norm (for problems without a
    certified optimal value).
    """
    if metric == "avg_gap":
        return curve.metric("avg_gap")
    if metric == "grad_norm_sq_min":
        return running_min(curve.metric("grad_norm_sq"))
    raise HarnessError(f"unknown transient metric {metric!r}; expected one "
                       f"of {', '.join(TRANSIENT_METRICS)}")


# -- output ------------------------------------------------------------------

def csv_lines(ks, columns, preamble=()) -> list[str]:
    """Render curve columns as CSV lines.

    ``columns`` is an ordered sequence of ``(metric_name, means, stds)``;
    the header is ``k`` then ``<name>_mean, <name>_std`` per metric, and
    values are printed with 17 significant digits.  ``preamble`` lines are
    emitted first, each prefixed with ``# ``.
    """
    lines = [f"# {text}" for text in preamble]
    header = ["k"]
    for name, _, _ in columns:
        header.append(f"{name}_mean")
        header.append(f"{name}_std")
    lines.append(",".join(header))
    for r, k in enumerate(ks):
        row = [str(int(k))]
        for _, means, stds in columns:
            row.append(textio.format_float(means[r]))
            row.append(textio.format_float(stds[r]))
        lines.append(",".join(row))
    return lines


def write_csv(path, ks, columns, preamble=()) -> None:
    """Write curve columns (see :func:`csv_lines`) to ``path``."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(csv_lines(ks, columns, preamble)) + "\n")


def _curve_preamble(curve: AlgorithmCurves,
                    spectra: dict[str, float]) -> list[str]:
    lines = [
        f"algorithm = {curve.variant}",
        f"label = {curve.label}",
        f"mode = {curve.mode}",
        f"alpha = {textio.format_float(curve.alpha)}",
        f"beta = {textio.format_float(curve.beta)}",
        f"batch_size = {curve.batch_size}",
        f"completed_trials = {curve.completed} of {curve.trials}",
    ]
    if curve.diverged:
        noted = "; ".join(f"trial {t} at k={k}" for t, k in curve.diverged)
        lines.append(f"diverged = {noted}")
    for key in ("lambda", "one_minus_lambda", "eta_w", "rho_tilde_w"):
        lines.append(f"{key} = {textio.format_float(spectra[key])}")
    return lines


def _json_number(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def experiment_manifest(result: ExperimentResult) -> dict:
    """JSON-ready description of what ran and what was resolved."""
    cfg = result.config
    algorithms = []
    for curve in result.curves:
        algorithms.append({
            "label": curve.label,
            "variant": curve.variant,
            "mode": curve.mode,
            "alpha": _json_number(curve.alpha),
            "beta": _json_number(curve.beta),
            "beta_spec": curve.beta_spec,
            "batch_size": curve.batch_size,
            "active_bound": curve.active,
            "alpha_formula": _json_number(curve.alpha_formula),
            "bounds": (None if curve.bounds is None else
                       {k: _json_number(v) for k, v in curve.bounds.items()}),
            "trials": curve.trials,
            "completed": curve.completed,
            "diverged": [{"trial": t, "k": k} for t, k in curve.diverged],
        })
    return {
        "schema_version": cfg.schema_version,
        "seed": cfg.seed,
        "backend": active_backend(),
        "K": cfg.K,
        "trials": cfg.trials,
        "record_every": cfg.record_every,
        "batch_size": cfg.batch_size,
        "transient_metric": cfg.transient_metric,
        "topology": {"kind": cfg.topology, "n": cfg.n, "scheme": cfg.scheme,
                     "lazy": cfg.lazy},
        "spectra": {k: _json_number(v) for k, v in result.spectra.items()},
        "problem": {"kind": cfg.problem, "dim": cfg.dim,
                    **{k: _json_number(v)
                       for k, v in result.constants.items()}},
        "algorithms": algorithms,
    }


def write_experiment(result: ExperimentResult, outdir) -> list[str]:
    """Write one CSV per algorithm plus ``manifest.json``; returns paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for curve in result.curves:
        path = os.path.join(outdir, f"{curve.label}.csv")
        columns = [(name, curve.metric(name), curve.metric_std(name))
                   for name in METRIC_NAMES]
        write_csv(path, curve.ks, columns,
                  preamble=_curve_preamble(curve, result.spectra))
        paths.append(path)
    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w", encoding="ascii") as fh:
        json.dump(experiment_manifest(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(manifest_path)
    return paths


def run_sweep(cfg: ExperimentConfig, sizes: list[int], outdir,
              workers: int = 1) -> list[tuple[int, ExperimentResult, list[str]]]:
    """Re-run the experiment across network sizes, one subdirectory each.

    Every derived quantity (topology, partition, theorem parameters) is
    rebuilt per size; each ``n=<size>`` directory gets its own CSVs and
    manifest with that size's spectrum.
    """
    out = []
    for size in sizes:
        sized = replace(cfg, n=size)
        # Round-trip through the parser so cross-field checks (for example
        # n_samples >= n) run against the new size.
        sized = parse_config(serialize_config(sized))
        result = run_experiment(sized, workers=workers)
        paths = write_experiment(result, os.path.join(outdir, f"n={size}"))
        out.append((size, result, paths))
    return out

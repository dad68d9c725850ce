"""Shared builders for the test suite (no test logic here)."""

from __future__ import annotations

import numpy as np

from dsmtlab import rng
from dsmtlab.optimizers import HyperParams, StepContext, init_state
from dsmtlab.oracles import (ObjectiveSuite, generate_synthetic,
                             make_quadratic_suite, partition_heterogeneous)
from dsmtlab.topology import (GraphSpec, LcaOperator, MixingMatrix,
                              build_graph, mixing_from_graph)


def graph(kind: str, n: int, seed: int = 0, **kwargs):
    return build_graph(GraphSpec(kind, n, **kwargs), rng.graph_rng(seed))


def ring_mixing(n: int, lazy: bool = True) -> MixingMatrix:
    return mixing_from_graph(graph("ring", n), "uniform_neighbor", lazy)


def quadratic_suite(n: int, dim: int = 6, rows: int = 10, seed: int = 0,
                    heterogeneity: float = 1.0,
                    noise: float = 1.0) -> ObjectiveSuite:
    return make_quadratic_suite(n, rows, dim, heterogeneity, noise,
                                rng.data_rng(seed))


def logistic_suite(n: int, dim: int = 6, n_samples: int = 400, seed: int = 0,
                   regularizer: str = "l2",
                   weight: float = 0.05) -> ObjectiveSuite:
    dataset = generate_synthetic(n_samples, dim, 2.0, rng.data_rng(seed))
    part = partition_heterogeneous(dataset, n)
    return ObjectiveSuite.logistic(dataset, part, regularizer=regularizer,
                                   weight=weight)


def make_ctx(variant: str, suite: ObjectiveSuite, mixing: MixingMatrix | None,
             alpha: float = 0.01, beta: float = 0.0, batch_size=1,
             seed: int = 0, trial: int = 0, hb_beta: float = 0.9,
             K: int = 1) -> StepContext:
    lca = None
    if variant == "DSMT" and mixing is not None:
        lca = LcaOperator(mixing=mixing)
    return StepContext(suite=suite, hp=HyperParams(alpha=alpha, beta=beta, K=K),
                       rngs=rng.agent_rngs(seed, trial, suite.n_agents),
                       mixing=mixing, lca=lca, batch_size=batch_size,
                       hb_beta=hb_beta)


def common_x0(n: int, dim: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    return np.tile(scale * rng.init_rng(seed).standard_normal(dim), (n, 1))


def spread_x0(n: int, dim: int, seed: int = 0, scale: float = 1.0) -> np.ndarray:
    return scale * rng.init_rng(seed).standard_normal((n, dim))


def start(variant: str, suite: ObjectiveSuite, mixing: MixingMatrix | None,
          x0: np.ndarray, **kwargs):
    ctx = make_ctx(variant, suite, mixing, **kwargs)
    return init_state(variant, x0, ctx), ctx

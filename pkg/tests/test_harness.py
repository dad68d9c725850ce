"""Config schema, parameter resolution, experiment running, outputs, CLI."""

import json
import math
import os

import numpy as np
import pytest

import helpers
from dsmtlab import cli, harness, rng
from dsmtlab.diagnostics import METRIC_NAMES
from dsmtlab.harness import (AlgorithmSpec, ConfigError, HarnessError,
                             TrialResult, build_problem, config_spectra,
                             csv_lines, parse_config, resolve_algorithms,
                             resolve_beta, run_experiment, run_sweep,
                             run_trial, serialize_config, transient_curve,
                             write_experiment)
from dsmtlab.topology import lca_params, mixing_from_graph

MINIMAL = """\
schema_version = 1
topology = ring
n = 16
problem = quadratic
dim = 4
rows_per_agent = 6
algorithms = DSMT manual alpha=0.01 beta=0.9
K = 1000
trials = 3
seed = 42
"""

TINY = """\
schema_version = 1
topology = ring
n = 4
problem = quadratic
dim = 3
rows_per_agent = 5
algorithms = DSMT manual alpha=0.02 beta=rho_w; DSGD manual alpha=0.02; \
CSGDM manual alpha=0.02 beta=0.5
K = 10
record_every = 3
trials = 3
seed = 5
"""


def tiny_cfg(**overrides):
    cfg = parse_config(TINY)
    if overrides:
        from dataclasses import replace
        cfg = parse_config(serialize_config(replace(cfg, **overrides)))
    return cfg


# -- parsing and validation -----------------------------------------------------

def test_minimal_config_parses_with_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.topology == "ring" and cfg.n == 16
    assert cfg.scheme == "uniform_neighbor" and cfg.lazy is True
    assert cfg.algorithms == (AlgorithmSpec("DSMT", "manual", 0.01, "0.9"),)
    assert cfg.batch_size == 1
    assert cfg.K == 1000 and cfg.trials == 3 and cfg.seed == 42
    assert cfg.record_every == 10
    assert cfg.init == "common" and cfg.init_scale == 1.0
    assert cfg.hb_beta == 0.9
    assert cfg.transient_metric == "avg_gap"
    assert cfg.heterogeneity == 1.0 and cfg.noise == 1.0
    assert cfg.p_edge is None and cfg.n_samples is None


def test_all_violations_collected_in_one_error():
    broken = """\
schema_version = 7
topology = moebius
topology = ring
just a stray line
n = 3
p_edge = 0.5
problem = logistic_l2
dim = 3
n_samples = 2
reg_weight = 0.05
algorithms = DSMT manual alpha=0.01 beta=1.0; DSGT theorem_ncvx alpha=0.1
K = 100
seed = 1
frobnicate = yes
"""
    with pytest.raises(ConfigError) as err:
        parse_config(broken)
    messages = err.value.errors
    assert len(messages) >= 7
    joined = "\n".join(messages)
    assert "schema_version" in joined
    assert "duplicate key 'topology'" in joined
    assert "key = value" in joined
    assert "p_edge" in joined                  # inapplicable for ring
    assert "beta" in joined                    # beta = 1.0 named
    assert "theorem_ncvx" in joined            # alpha token forbidden
    assert "n_samples" in joined               # fewer samples than agents
    assert "frobnicate: unknown key" in joined
    # And the exception stringifies to every collected message.
    assert str(err.value) == "; ".join(messages)


def test_missing_required_keys_are_all_named():
    with pytest.raises(ConfigError) as err:
        parse_config("schema_version = 1\n")
    joined = "\n".join(err.value.errors)
    for key in ("topology", "n", "problem", "dim", "algorithms", "K", "seed"):
        assert f"{key}: required" in joined


def test_algorithm_grammar():
    base = MINIMAL.replace("DSMT manual alpha=0.01 beta=0.9", "{}")
    ok = parse_config(base.format(
        "DSMT theorem_ncvx; DSGT manual alpha=0.5; ED manual alpha=1e-3 beta=0.2"))
    assert [a.mode for a in ok.algorithms] == ["theorem_ncvx", "manual", "manual"]
    assert ok.algorithms[1].beta == "0"        # manual default
    for bad, needle in [
        ("DSMT", "mode"),
        ("DSMT manual", "alpha"),
        ("DSMT manual beta=0.5", "alpha"),
        ("DSMT sorcery alpha=0.1", "sorcery"),
        ("DSMT manual alpha=zero", "alpha"),
        ("DSMT manual alpha=0.1 beta=rule_unknown", "beta"),
        ("DSMT manual alpha=0.1 beta=-0.5", "beta"),
        ("DSMT manual alpha=0.1 gamma=2", "gamma"),
        ("XSGD manual alpha=0.1", "XSGD"),
        ("DSMT theorem_pl beta=0.9", "beta"),
        (";", "algorithms"),
    ]:
        with pytest.raises(ConfigError) as err:
            parse_config(base.format(bad))
        assert needle in "\n".join(err.value.errors), bad


def test_beta_rule_tokens_round_trip():
    base = MINIMAL.replace("beta=0.9", "beta={}")
    for token in ("rho_w", "rule_ncvx", "rule_pl", "rule_gap", "0.25"):
        cfg = parse_config(base.format(token))
        assert cfg.algorithms[0].beta == token
        again = parse_config(serialize_config(cfg))
        assert again == cfg


def test_batch_size_forms():
    assert parse_config(MINIMAL + "batch_size = full\n").batch_size == "full"
    assert parse_config(MINIMAL + "batch_size = 4\n").batch_size == 4
    for bad in ("0", "-2", "half"):
        with pytest.raises(ConfigError, match="batch_size"):
            parse_config(MINIMAL + f"batch_size = {bad}\n")


def test_topology_conditional_keys():
    er = MINIMAL.replace("topology = ring", "topology = erdos_renyi")
    with pytest.raises(ConfigError, match="p_edge"):
        parse_config(er)                      # required for erdos_renyi
    assert parse_config(er + "p_edge = 0.3\n").p_edge == 0.3
    with pytest.raises(ConfigError, match="p_edge"):
        parse_config(er + "p_edge = 1.5\n")
    custom = MINIMAL.replace("topology = ring", "topology = custom").replace(
        "n = 16", "n = 3")
    with pytest.raises(ConfigError, match="edges"):
        parse_config(custom)
    cfg = parse_config(custom + "edges = 0-1, 1-2\n")
    assert cfg.edges == ((0, 1), (1, 2))
    with pytest.raises(ConfigError, match="edges"):
        parse_config(custom + "edges = 0-1, 1:2\n")


def test_problem_conditional_keys():
    with pytest.raises(ConfigError, match="rows_per_agent"):
        parse_config(MINIMAL.replace("rows_per_agent = 6\n", ""))
    logi = MINIMAL.replace("problem = quadratic", "problem = logistic_l2")
    logi = logi.replace("rows_per_agent = 6\n", "")
    with pytest.raises(ConfigError) as err:
        parse_config(logi)
    joined = "\n".join(err.value.errors)
    assert "n_samples: required" in joined and "reg_weight: required" in joined
    full = logi + "n_samples = 64\nreg_weight = 0.05\n"
    cfg = parse_config(full)
    assert cfg.partition == "heterogeneous" and cfg.separation == 2.0
    with pytest.raises(ConfigError, match="reg_weight"):
        parse_config(full.replace("reg_weight = 0.05", "reg_weight = 0"))
    with pytest.raises(ConfigError, match="heterogeneity"):
        parse_config(full + "heterogeneity = 2.0\n")


def test_pl_modes_need_gradient_domination_and_peers():
    ncvx = MINIMAL.replace("problem = quadratic", "problem = logistic_nonconvex")
    ncvx = ncvx.replace("rows_per_agent = 6", "n_samples = 64\nreg_weight = 0.1")
    ncvx = ncvx.replace("DSMT manual alpha=0.01 beta=0.9", "DSMT theorem_pl")
    with pytest.raises(ConfigError, match="gradient-dominated"):
        parse_config(ncvx)
    lone = MINIMAL.replace("n = 16", "n = 1").replace(
        "DSMT manual alpha=0.01 beta=0.9", "DSMT theorem_pl_formula")
    with pytest.raises(ConfigError, match="n >= 2"):
        parse_config(lone)


def test_shipped_configs_validate_and_round_trip():
    for name in os.listdir("configs"):
        path = os.path.join("configs", name)
        cfg = harness.parse_config_file(path)
        assert parse_config(serialize_config(cfg)) == cfg


def test_generated_configs_round_trip():
    stream = rng.data_rng(99)
    topologies = ("ring", "complete", "grid2d", "erdos_renyi", "custom")
    problems = ("quadratic", "logistic_l2", "logistic_nonconvex")
    variants = ("DSMT", "DSMT_noLCA", "DSGT", "DSGD", "ED", "DSGT_HB",
                "CSGD", "CSGDM")
    betas = ("0.5", "rho_w", "rule_ncvx", "rule_pl", "rule_gap",
             "0.123456789012345", None)
    for case in range(100):
        n = int(stream.integers(2, 20))
        topology = topologies[case % len(topologies)]
        problem = problems[case % len(problems)]
        lines = [
            "schema_version = 1",
            f"topology = {topology}",
            f"n = {n}",
            f"problem = {problem}",
            f"dim = {int(stream.integers(1, 8))}",
            f"K = {int(stream.integers(1, 10 ** 5))}",
            f"trials = {int(stream.integers(1, 12))}",
            f"seed = {int(stream.integers(0, 10 ** 6))}",
            f"record_every = {int(stream.integers(1, 50))}",
            f"init = {'common' if stream.random() < 0.5 else 'spread'}",
            f"init_scale = {float(stream.uniform(0.0, 3.0))!r}",
            f"hb_beta = {float(stream.uniform(0.0, 0.99))!r}",
        ]
        if topology == "erdos_renyi":
            lines.append(f"p_edge = {float(stream.uniform(0.1, 1.0))!r}")
        if topology == "custom":
            lines.append("edges = " + ",".join(
                f"{i}-{i + 1}" for i in range(n - 1)))
        if problem == "quadratic":
            lines.append(f"rows_per_agent = {int(stream.integers(1, 30))}")
            lines.append(f"heterogeneity = {float(stream.uniform(0, 3))!r}")
        else:
            lines.append(f"n_samples = {int(stream.integers(n, 500))}")
            lines.append(f"reg_weight = {float(stream.uniform(0.01, 1.0))!r}")
            lines.append(f"partition = "
                         f"{'shuffled' if stream.random() < 0.5 else 'heterogeneous'}")
        specs = []
        for _ in range(int(stream.integers(1, 5))):
            variant = variants[int(stream.integers(0, len(variants)))]
            modes = ["manual", "theorem_ncvx"]
            if problem != "logistic_nonconvex":
                modes += ["theorem_pl", "theorem_pl_formula"]
            mode = modes[int(stream.integers(0, len(modes)))]
            if mode == "manual":
                text = f"{variant} manual alpha={float(stream.uniform(1e-4, 1.0))!r}"
                beta = betas[int(stream.integers(0, len(betas)))]
                if beta is not None:
                    text += f" beta={beta}"
            else:
                text = f"{variant} {mode}"
            specs.append(text)
        lines.append("algorithms = " + "; ".join(specs))
        text = "\n".join(lines) + "\n"
        cfg = parse_config(text)
        assert parse_config(serialize_config(cfg)) == cfg, case


# -- spectra and resolution ------------------------------------------------------

def test_config_spectra_matches_direct_construction():
    cfg = tiny_cfg(topology="grid2d", n=9, scheme="metropolis")
    spectra = config_spectra(cfg)
    mix = mixing_from_graph(helpers.graph("grid2d", 9, seed=cfg.seed),
                            cfg.scheme, cfg.lazy)
    assert spectra["lambda"] == mix.lam
    assert spectra["one_minus_lambda"] == mix.gap
    eta, rho = lca_params(mix.lam)
    assert spectra["eta_w"] == eta and spectra["rho_tilde_w"] == rho


def test_resolve_beta_rules():
    lam, rho = 0.8, 0.9
    assert resolve_beta("rho_w", 8, lam, rho) == rho
    assert resolve_beta("rule_ncvx", 8, lam, rho) == pytest.approx(
        1.0 - 0.1 / 2.0, abs=1e-15)
    assert resolve_beta("rule_pl", 16, lam, rho) == pytest.approx(
        1.0 - 0.1 / 4.0, abs=1e-15)
    assert resolve_beta("rule_gap", 8, lam, rho) == pytest.approx(
        1.0 - math.sqrt((1.0 - lam) / 8.0), abs=1e-15)
    assert resolve_beta("0.35", 8, lam, rho) == 0.35


def test_resolution_labels_and_centralized_batching():
    cfg = tiny_cfg()
    prob = build_problem(cfg)
    algos = resolve_algorithms(cfg, prob)
    assert [a.label for a in algos] == ["alg0_DSMT", "alg1_DSGD", "alg2_CSGDM"]
    assert algos[0].hp.beta == prob.spectra["rho_tilde_w"]
    assert algos[1].hp.beta == 0.0
    assert not algos[0].centralized and algos[2].centralized
    assert algos[0].batch_size == 1
    assert algos[2].batch_size == cfg.n * 1    # equalized gradient work
    full = tiny_cfg(batch_size="full")
    assert resolve_algorithms(full, prob)[2].batch_size == "full"


def test_theorem_ncvx_resolution_obeys_bounds():
    cfg = tiny_cfg(algorithms=(AlgorithmSpec("DSMT", "theorem_ncvx"),),
                   K=5000)
    prob = build_problem(cfg)
    algo = resolve_algorithms(cfg, prob)[0]
    sel = algo.selection
    assert sel is not None and algo.mode == "theorem_ncvx"
    rho = prob.spectra["rho_tilde_w"]
    assert algo.hp.beta == pytest.approx(1.0 - (1.0 - rho) / 4 ** (1 / 3),
                                         rel=1e-15)
    for name, bound in sel.bounds.items():
        assert algo.hp.alpha <= bound * (1 + 1e-15), name
    assert algo.active in ("formula",) + tuple(sel.bounds)


def test_theorem_pl_formula_clamps_only_at_stability():
    text = """\
schema_version = 1
topology = ring
n = 8
problem = logistic_l2
dim = 4
n_samples = 80
reg_weight = 0.05
algorithms = DSMT theorem_pl_formula; DSMT theorem_pl
K = 20000
trials = 1
seed = 11
"""
    cfg = parse_config(text)
    prob = build_problem(cfg)
    formula_algo, clamped_algo = resolve_algorithms(cfg, prob)
    sel = formula_algo.selection
    assert formula_algo.active in ("formula", "stability")
    assert formula_algo.hp.alpha == min(sel.alpha_formula,
                                        sel.bounds["stability"])
    # The fully clamped sibling can only be more conservative.
    assert clamped_algo.hp.alpha <= formula_algo.hp.alpha
    assert clamped_algo.hp.beta == formula_algo.hp.beta


def test_problem_initialization_modes():
    common = build_problem(tiny_cfg(init="common", init_scale=2.0))
    assert np.max(np.abs(np.diff(common.x0, axis=0))) == 0.0
    assert np.array_equal(common.x0_center, common.x0[0])
    spread = build_problem(tiny_cfg(init="spread"))
    assert np.ptp(spread.x0, axis=0).max() > 0.0
    assert np.array_equal(spread.x0_center, spread.x0.mean(axis=0))
    # Scale is applied to the shared stream draw.
    base = build_problem(tiny_cfg(init="common", init_scale=1.0))
    assert np.allclose(common.x0, 2.0 * base.x0, rtol=0.0, atol=0.0)


# -- running ---------------------------------------------------------------------

def test_trial_recording_grid():
    cfg = tiny_cfg()
    prob = build_problem(cfg)
    algo = resolve_algorithms(cfg, prob)[0]
    trial = run_trial(cfg, prob, algo, 0)
    assert trial.status == "completed"
    ks = [row.k for row in trial.rows]
    assert ks == [0, 3, 6, 9, 10]
    assert all(b > a for a, b in zip(ks, ks[1:]))


def test_fairness_shared_start_across_roster():
    result = run_experiment(tiny_cfg(trials=1))
    gaps = [result.curve(label).metric("mean_gap")[0]
            for label in ("alg0_DSMT", "alg1_DSGD", "alg2_CSGDM")]
    assert gaps[0] == gaps[1] == gaps[2]


def test_single_trial_stds_are_zero():
    result = run_experiment(tiny_cfg(trials=1))
    for curve in result.curves:
        assert curve.completed == 1
        assert np.max(np.abs(curve.stds)) == 0.0


def test_experiment_repeatable():
    a = run_experiment(tiny_cfg())
    b = run_experiment(tiny_cfg())
    for ca, cb in zip(a.curves, b.curves):
        assert np.array_equal(ca.means, cb.means)
        assert np.array_equal(ca.stds, cb.stds)
        assert np.array_equal(ca.ks, cb.ks)


def test_parallel_workers_match_serial():
    cfg = tiny_cfg(trials=4)
    serial = run_experiment(cfg, workers=1)
    pooled = run_experiment(cfg, workers=2)
    for cs, cp in zip(serial.curves, pooled.curves):
        assert np.array_equal(cs.means, cp.means)
        assert np.array_equal(cs.stds, cp.stds)


def test_trial_varies_with_index_but_not_repeat():
    cfg = tiny_cfg()
    prob = build_problem(cfg)
    algo = resolve_algorithms(cfg, prob)[0]
    t0a = run_trial(cfg, prob, algo, 0)
    t0b = run_trial(cfg, prob, algo, 0)
    t1 = run_trial(cfg, prob, algo, 1)
    assert t0a.rows == t0b.rows
    assert t0a.rows != t1.rows


def test_divergence_reported_and_excluded(tmp_path):
    # Big enough that the iterates overflow to inf inside ten steps.
    cfg = tiny_cfg(algorithms=(AlgorithmSpec("DSGD", "manual", 1e40, "0"),),
                   trials=2)
    with np.errstate(all="ignore"):
        result = run_experiment(cfg)
    curve = result.curves[0]
    assert curve.completed == 0 and curve.trials == 2
    assert len(curve.diverged) == 2
    assert curve.ks.size == 0 and curve.means.size == 0
    paths = write_experiment(result, tmp_path)
    text = open(paths[0]).read()
    assert "completed_trials = 0 of 2" in text
    assert "diverged = trial 0 at k=" in text
    manifest = json.load(open(os.path.join(tmp_path, "manifest.json")))
    entry = manifest["algorithms"][0]
    assert entry["completed"] == 0
    assert [d["trial"] for d in entry["diverged"]] == [0, 1]
    assert all(d["k"] >= 1 for d in entry["diverged"])


def test_partial_divergence_keeps_surviving_trials(monkeypatch, tmp_path):
    cfg = tiny_cfg(trials=3)
    clean = run_experiment(cfg).curves[0]
    real = harness.run_trial

    def failing(cfg_, prob_, algo_, trial):
        out = real(cfg_, prob_, algo_, trial)
        if trial == 1:
            return TrialResult(rows=out.rows[:2], status="diverged",
                               diverged_at=4)
        return out

    monkeypatch.setattr(harness, "run_trial", failing)
    result = run_experiment(cfg)
    curve = result.curves[0]
    assert curve.completed == 2 and curve.trials == 3
    assert curve.diverged == ((1, 4),)
    assert curve.ks.tolist() == [0, 3, 6, 9, 10]
    assert np.max(curve.stds) > 0.0           # ddof=1 over two survivors
    assert not np.array_equal(curve.means, clean.means)
    text = open(write_experiment(result, tmp_path)[0]).read()
    assert "completed_trials = 2 of 3" in text
    assert "diverged = trial 1 at k=4" in text


def test_curve_lookup_by_label_and_variant():
    result = run_experiment(tiny_cfg(trials=1))
    assert result.curve("alg1_DSGD").variant == "DSGD"
    assert result.curve("DSMT").label == "alg0_DSMT"
    with pytest.raises(KeyError):
        result.curve("QSGD")


def test_transient_curve_selection():
    result = run_experiment(tiny_cfg(trials=1))
    curve = result.curves[0]
    assert np.array_equal(transient_curve(curve, "avg_gap"),
                          curve.metric("avg_gap"))
    rm = transient_curve(curve, "grad_norm_sq_min")
    assert np.all(np.diff(rm) <= 0.0)
    assert rm[0] == curve.metric("grad_norm_sq")[0]
    with pytest.raises(HarnessError, match="transient"):
        transient_curve(curve, "last_iterate")


# -- outputs ---------------------------------------------------------------------

def test_csv_lines_single_metric_is_three_columns():
    lines = csv_lines([7], [("mean_gap", np.array([0.125]), np.array([0.0]))])
    assert lines[0] == "k,mean_gap_mean,mean_gap_std"
    assert lines[1] == "7,0.125,0"
    assert all(len(line.split(",")) == 3 for line in lines)


def test_csv_preamble_prefix():
    lines = csv_lines([0], [("m", np.array([1.0]), np.array([2.0]))],
                      preamble=["note = hello"])
    assert lines[0] == "# note = hello"


def test_written_files_reparse_to_full_precision(tmp_path):
    result = run_experiment(tiny_cfg())
    paths = write_experiment(result, tmp_path)
    assert len(paths) == len(result.curves) + 1
    assert paths[-1].endswith("manifest.json")
    for curve, path in zip(result.curves, paths):
        rows = []
        header = None
        for line in open(path):
            if line.startswith("#"):
                continue
            if header is None:
                header = line.strip().split(",")
                continue
            rows.append([float(tok) for tok in line.strip().split(",")])
        expected = ["k"]
        for name in METRIC_NAMES:
            expected += [f"{name}_mean", f"{name}_std"]
        assert header == expected
        data = np.array(rows)
        assert np.array_equal(data[:, 0], curve.ks.astype(float))
        assert np.array_equal(data[:, 1::2], curve.means)
        assert np.array_equal(data[:, 2::2], curve.stds)


def test_manifest_contents(tmp_path):
    result = run_experiment(tiny_cfg())
    write_experiment(result, tmp_path)
    manifest = json.load(open(os.path.join(tmp_path, "manifest.json")))
    assert manifest["schema_version"] == 1
    assert manifest["backend"] in ("python", "ext")
    assert manifest["topology"] == {"kind": "ring", "n": 4,
                                    "scheme": "uniform_neighbor", "lazy": True}
    assert manifest["spectra"]["rho_tilde_w"] == result.spectra["rho_tilde_w"]
    assert manifest["problem"]["kind"] == "quadratic"
    assert manifest["problem"]["L"] == result.constants["L"]
    labels = [a["label"] for a in manifest["algorithms"]]
    assert labels == ["alg0_DSMT", "alg1_DSGD", "alg2_CSGDM"]
    assert manifest["algorithms"][0]["beta_spec"] == "rho_w"
    assert manifest["algorithms"][0]["beta"] == result.spectra["rho_tilde_w"]


def test_serial_reruns_are_byte_identical(tmp_path):
    cfg = tiny_cfg()
    for sub in ("a", "b"):
        write_experiment(run_experiment(cfg), tmp_path / sub)
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    for name in names:
        assert (open(tmp_path / "a" / name, "rb").read()
                == open(tmp_path / "b" / name, "rb").read()), name


# -- sweeps ----------------------------------------------------------------------

def test_sweep_rederives_spectra_and_theorem_beta(tmp_path):
    cfg = tiny_cfg(algorithms=(AlgorithmSpec("DSMT", "theorem_ncvx"),),
                   K=50, record_every=25, trials=1)
    out = run_sweep(cfg, [4, 8], tmp_path)
    assert [size for size, _, _ in out] == [4, 8]
    rhos = []
    for size, result, paths in out:
        subdir = tmp_path / f"n={size}"
        assert all(os.path.dirname(p) == str(subdir) for p in paths)
        manifest = json.load(open(subdir / "manifest.json"))
        rho = manifest["spectra"]["rho_tilde_w"]
        beta = manifest["algorithms"][0]["beta"]
        assert beta == pytest.approx(1.0 - (1.0 - rho) / size ** (1 / 3),
                                     rel=1e-15)
        # The CSV preamble carries the same spectrum for plot scripts.
        preamble = [line for line in open(paths[0]) if line.startswith("#")]
        stated = next(line for line in preamble if "rho_tilde_w" in line)
        assert float(stated.split("=")[1]) == rho
        rhos.append(rho)
    assert rhos[0] < rhos[1]                   # bigger ring mixes slower


def test_sweep_revalidates_cross_field_rules(tmp_path):
    text = """\
schema_version = 1
topology = ring
n = 4
problem = logistic_l2
dim = 3
n_samples = 8
reg_weight = 0.05
algorithms = DSGD manual alpha=0.01
K = 10
trials = 1
seed = 2
"""
    cfg = parse_config(text)
    with pytest.raises(ConfigError, match="n_samples"):
        run_sweep(cfg, [16], tmp_path)


# -- CLI -------------------------------------------------------------------------

def write_cfg(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cli_validate(tmp_path, capsys):
    path = write_cfg(tmp_path, TINY)
    assert cli.main(["validate", path]) == 0
    assert capsys.readouterr().out.strip() == f"{path}: ok"
    bad = write_cfg(tmp_path, TINY + "frobnicate = 1\nn = 9\n", "bad.cfg")
    assert cli.main(["validate", bad]) == 1
    err = capsys.readouterr().err
    assert "error: frobnicate: unknown key" in err
    assert "error: line" in err                # duplicate n


def test_cli_missing_file(tmp_path, capsys):
    assert cli.main(["validate", str(tmp_path / "absent.cfg")]) == 1
    assert "error:" in capsys.readouterr().err


def test_cli_spectra(tmp_path, capsys):
    ring100 = TINY.replace("n = 4", "n = 100")
    path = write_cfg(tmp_path, ring100)
    assert cli.main(["spectra", path]) == 0
    out = capsys.readouterr().out
    values = dict(line.split(" = ") for line in out.strip().splitlines())
    assert set(values) == {"lambda", "one_minus_lambda", "eta_w",
                           "rho_tilde_w"}
    assert 6.3e-4 <= float(values["one_minus_lambda"]) <= 6.9e-4
    assert float(values["lambda"]) == 1.0 - float(values["one_minus_lambda"])


def test_cli_run(tmp_path, capsys):
    path = write_cfg(tmp_path, TINY)
    out_dir = tmp_path / "out"
    assert cli.main(["run", path, "--out", str(out_dir), "--serial"]) == 0
    wrote = [line for line in capsys.readouterr().out.splitlines()
             if line.startswith("wrote ")]
    assert len(wrote) == 4                    # three algorithms + manifest
    for line in wrote:
        assert os.path.exists(line.split(" ", 1)[1])


def test_cli_sweep(tmp_path, capsys):
    cfg_text = TINY.replace(
        "algorithms = DSMT manual alpha=0.02 beta=rho_w; DSGD manual "
        "alpha=0.02; CSGDM manual alpha=0.02 beta=0.5",
        "algorithms = DSGD manual alpha=0.02").replace(
        "K = 10", "K = 6").replace("trials = 3", "trials = 1")
    path = write_cfg(tmp_path, cfg_text)
    out_dir = tmp_path / "sweep"
    assert cli.main(["sweep", path, "--vary", "n=4,6", "--out",
                     str(out_dir), "--serial"]) == 0
    capsys.readouterr()
    assert sorted(os.listdir(out_dir)) == ["n=4", "n=6"]
    assert cli.main(["sweep", path, "--vary", "m=4", "--out",
                     str(out_dir)]) == 1
    assert "--vary" in capsys.readouterr().err
    assert cli.main(["sweep", path, "--vary", "n=4", "--out", str(out_dir),
                     "--workers", "0"]) == 1
    assert "--workers" in capsys.readouterr().err


def test_cli_run_reports_runtime_failures(tmp_path, capsys):
    # Valid schema, but the custom graph is disconnected: the failure
    # surfaces at build time as a single machine-readable error line.
    text = """\
schema_version = 1
topology = custom
n = 4
edges = 0-1, 2-3
problem = quadratic
dim = 2
rows_per_agent = 3
algorithms = DSGD manual alpha=0.01
K = 5
trials = 1
seed = 0
"""
    path = write_cfg(tmp_path, text)
    assert cli.main(["run", path, "--out", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ") and "connected" in err

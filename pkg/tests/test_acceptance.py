"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

The Monte-Carlo fixture (20 seeds x 5 modes of the headline preset) is run
once per session and shared by the reproduction, stability-bound, and
coverage criteria. Run with ``pytest tests/test_acceptance.py -v -s``.
"""

import time

import numpy as np
import pytest

from coragp import gp
from coragp.aggregation import (
    AggregationMode,
    AggregationSettings,
    cgp_weights,
    cora_weights,
)
from coragp.cli import EXIT_OK, EXIT_VALIDATION, main
from coragp.dynamics import forward_dynamics, unknown_f
from coragp.sim import World, bench_weights, monte_carlo, run

MODES = [AggregationMode.WITHOUT_GP, AggregationMode.INDIVIDUAL,
         AggregationMode.CGP, AggregationMode.CORA_TOP,
         AggregationMode.CORA_AVG]


def report(num, name, ok, detail=""):
    print(f"\n[criterion {num}] {name}: {'PASS' if ok else 'FAIL'}"
          + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def mc_results(paperv_config):
    """20 independent-seed trials of the headline preset for every mode;
    trials are seed-aligned across modes."""
    return {mode: monte_carlo(paperv_config, trials=20, mode=mode)
            for mode in MODES}


def test_criterion_1_gp_oracle_equivalence(rng):
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        M = int(rng.integers(2, 11))
        D = int(rng.integers(1, 4))
        params = gp.KernelParams(
            signal_std=float(rng.uniform(0.3, 2.0)),
            inv_lengthscales=rng.uniform(0.2, 3.0, size=D),
            noise_std=float(rng.uniform(0.05, 0.5)),
        )
        P = rng.normal(size=(M, D))
        Y = rng.normal(size=(M, 2))
        model = gp.fit(P, Y, params)
        q = rng.normal(size=D)
        pred = model.predict(q, with_std=True)
        # dense-inverse brute force
        K = np.array([[gp.kernel_eval(P[a], P[b], params) for b in range(M)]
                      for a in range(M)])
        Kinv = np.linalg.inv(K + params.noise_std**2 * np.eye(M))
        kv = np.array([gp.kernel_eval(P[a], q, params) for a in range(M)])
        mean_ref = kv @ Kinv @ Y
        var_ref = params.signal_std**2 - kv @ Kinv @ kv
        worst = max(worst,
                    float(np.max(np.abs(pred.mean - mean_ref)
                                 / np.maximum(np.abs(mean_ref), 1e-12))),
                    abs(pred.std[0] ** 2 - var_ref) / max(abs(var_ref), 1e-12))
    elapsed = time.perf_counter() - start
    report(1, "GP oracle equivalence",
           worst <= 1e-8 and elapsed < 5.0,
           f"max rel err {worst:.2e}, {elapsed:.2f} s")


def test_criterion_2_aggregation_simplex_locality_fuzz(rng):
    start = time.perf_counter()
    settings = AggregationSettings(mode=AggregationMode.CORA_AVG, sigma_g=0.15)
    ok = True
    for trial in range(10_000):
        n = int(rng.integers(2, 6))
        a_row = (rng.random(n) < 0.6).astype(float)
        i = int(rng.integers(0, n))
        a_row[i] = 1.0
        mode = (AggregationMode.CORA_AVG, AggregationMode.CORA_TOP)[trial % 2]
        settings = AggregationSettings(mode=mode, sigma_g=0.15)
        neigh = np.flatnonzero(a_row)
        kvecs = {l: rng.uniform(0.0, 1.0, size=int(rng.integers(2, 9)))
                 for l in neigh}
        w = cora_weights(i, kvecs, a_row, settings)
        ok &= bool(np.all(w.h >= 0))
        ok &= abs(w.h.sum() - 1.0) <= 1e-12
        ok &= bool(np.all(w.h[a_row == 0] == 0))
        if trial % 10 == 0:  # non-neighbor perturbation invariance
            off = np.flatnonzero(a_row == 0)
            if off.size:
                kvecs2 = dict(kvecs)
                kvecs2[int(off[0])] = rng.uniform(0, 1, size=5)
                ok &= bool(np.array_equal(
                    w.h, cora_weights(i, kvecs2, a_row, settings).h))
        if not ok:
            break
    elapsed = time.perf_counter() - start
    report(2, "aggregation simplex/locality fuzz (10k instances)",
           ok and elapsed < 30.0, f"{elapsed:.1f} s")


def test_criterion_3_reduction_identity(tiny_config, rng):
    # self-loops-only topology: leader feeds both agents, no follower edges
    topo = {"n": 2, "graphs": [{"name": "isolated", "edges": [],
                                "leader_links": [1.0, 1.0]}]}
    cfg = tiny_config.with_overrides({"topology": topo})
    q = rng.uniform(-1, 1, size=(2, 2))
    preds = {}
    for mode in (AggregationMode.INDIVIDUAL, AggregationMode.CORA_TOP,
                 AggregationMode.CORA_AVG, AggregationMode.CGP):
        world = World(cfg, seed=0, mode=mode)
        preds[mode] = world.predict(q, 0)[0]
    base = preds[AggregationMode.INDIVIDUAL]
    ok = all(np.array_equal(base, p) for p in preds.values())
    report(3, "reduction identity on self-loops-only topology", ok)


def test_criterion_4_exact_linearization(paperv_config):
    cfg = paperv_config.with_overrides({"horizon": 5.0, "dt": 1e-3})
    res = run(cfg, seed=0, mode=AggregationMode.PERFECT)
    log = res.log
    c = cfg.gains.c
    worst = 0.0
    for k in range(len(log)):
        qdd = forward_dynamics(log.q[k], log.qdot[k], log.u[k],
                               cfg.el_params, f=unknown_f(log.q[k]))
        worst = max(worst, float(np.max(np.abs(qdd - c[:, None] * log.nu[k]))))
    # monotone decay once past the initial transient
    tail = log.err_norm[log.t >= 1.0]
    monotone = bool(np.all(np.diff(tail) <= 1e-9))
    report(4, "exact linearization with a perfect estimate",
           worst <= 1e-9 and monotone,
           f"max residual {worst:.2e}, monotone={monotone}")


def test_criterion_5_complexity_separation(paperv_config):
    start = time.perf_counter()
    rows = bench_weights(paperv_config, m_grid=(100, 200, 300, 400, 800),
                         n_queries=1000, repetitions=9)
    elapsed = time.perf_counter() - start
    means = {(r["mode"], r["M"]): r["mean_ms"] for r in rows}
    slope_grid = [100, 200, 400, 800]

    def slope(mode):
        y = [means[(mode, M)] for M in slope_grid]
        return float(np.polyfit(np.log(slope_grid), np.log(y), 1)[0])

    s_avg = slope("CoraAvg")
    s_cgp = slope("CGP")
    ratio = means[("CGP", 300)] / means[("CoraAvg", 300)]
    ok = (0.7 <= s_avg <= 1.3 and 1.6 <= s_cgp <= 2.4 and ratio >= 50.0
          and elapsed < 120.0)
    report(5, "aggregation-weight complexity separation", ok,
           f"CoraAvg slope {s_avg:.2f}, CGP slope {s_cgp:.2f}, "
           f"ratio@300 {ratio:.0f}, {elapsed:.0f} s")


def test_criterion_6_qualitative_reproduction(mc_results):
    e = {m: mc_results[m].errors for m in MODES}
    coop = np.maximum.reduce([e[AggregationMode.CGP],
                              e[AggregationMode.CORA_TOP],
                              e[AggregationMode.CORA_AVG]])
    per_trial = (e[AggregationMode.WITHOUT_GP] > e[AggregationMode.INDIVIDUAL]) \
        & (e[AggregationMode.INDIVIDUAL] > coop)
    frac = float(per_trial.mean())
    cgp_mean = mc_results[AggregationMode.CGP].mean
    within = all(
        abs(mc_results[m].mean - cgp_mean) <= 0.25 * cgp_mean
        for m in (AggregationMode.CORA_TOP, AggregationMode.CORA_AVG))
    report(6, "20-seed error ordering and Cora-vs-CGP parity",
           frac >= 0.90 and within,
           f"ordering in {frac:.0%} of trials, "
           f"CGP mean {cgp_mean:.3f}, "
           f"CoraTop {mc_results[AggregationMode.CORA_TOP].mean:.3f}, "
           f"CoraAvg {mc_results[AggregationMode.CORA_AVG].mean:.3f}")


def test_criterion_6_tiny_ci_variant(tiny_config):
    start = time.perf_counter()
    results = {m: monte_carlo(tiny_config, trials=5, mode=m)
               for m in (AggregationMode.WITHOUT_GP, AggregationMode.INDIVIDUAL,
                         AggregationMode.CORA_AVG)}
    ordering = (results[AggregationMode.WITHOUT_GP].errors
                > results[AggregationMode.INDIVIDUAL].errors) \
        & (results[AggregationMode.INDIVIDUAL].errors
           > results[AggregationMode.CORA_AVG].errors)
    frac = float(ordering.mean())
    elapsed = time.perf_counter() - start
    report(6, "CI-fast ordering variant (< 60 s)",
           frac >= 0.90 and elapsed < 60.0,
           f"ordering in {frac:.0%} of trials, {elapsed:.0f} s")


def test_criterion_7_semi_markov_fidelity(paperv_config):
    sw = paperv_config.make_switcher(seed=123)
    P = sw.transition
    prev = sw.state
    states, sojourns = sw.sample_jumps(50_000)
    sources = np.concatenate([[prev], states[:-1]])
    counts = np.zeros_like(P)
    np.add.at(counts, (sources, states), 1.0)
    freq = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1.0)
    l1 = float(np.abs(freq - P).sum(axis=1).max())
    mean_sojourn = float(sojourns.mean())
    ok = l1 <= 0.05 and abs(mean_sojourn - 2.0) <= 0.05 * 2.0
    report(7, "semi-Markov switching fidelity", ok,
           f"max row L1 {l1:.3f}, sojourn mean {mean_sojourn:.3f} s")


def test_criterion_8_stability_bound(mc_results, capsys):
    # the validate command must state the PD status of the stability matrix;
    # with the preset's published gains the condition fails, so the finite
    # bound does not exist and the trajectory check below is vacuous
    rc = main(["validate", "--config", "paperV"])
    out = capsys.readouterr().out
    reported = ("is_pd:" in out) and rc in (EXIT_OK, EXIT_VALIDATION)
    frac = float(np.mean(np.concatenate(
        [mc_results[m].bound_satisfied for m in MODES])))
    # non-vacuous check: stiffer gains make the condition hold and the
    # finite bound must then actually contain the steady-state error
    rc2 = main(["validate", "--config", "tiny",
                "--override", "gains.c=[20, 20]"])
    capsys.readouterr()
    report(8, "stability condition report and error-bound check",
           reported and frac >= 0.95 and rc2 == EXIT_OK,
           f"PD status reported (exit {rc}), bound satisfied in {frac:.0%} "
           f"of trials, non-vacuous variant exit {rc2}")


def test_criterion_8_non_vacuous_bound(tiny_config):
    cfg = tiny_config.with_overrides({"gains.c": [20.0, 20.0]})
    res = run(cfg, seed=0, mode=AggregationMode.CORA_AVG)
    rep = res.bound_report
    steady = res.log.err_norm[res.log.t >= cfg.settle_fraction * cfg.horizon]
    ok = rep.is_pd and np.isfinite(rep.error_bound) \
        and float(steady.max()) <= rep.error_bound
    report(8, "finite bound contains the error when the condition holds", ok,
           f"bound {rep.error_bound:.1f}, max steady error {steady.max():.3f}")


def test_criterion_9_lemma1_coverage(mc_results):
    cov = np.concatenate([mc_results[m].coverage
                          for m in (AggregationMode.INDIVIDUAL,
                                    AggregationMode.CGP,
                                    AggregationMode.CORA_TOP,
                                    AggregationMode.CORA_AVG)])
    mean_cov = float(np.nanmean(cov))
    ok = mean_cov >= 0.95
    if not ok:
        # distributional check: warn rather than hard-fail is documented,
        # but the observed coverage comfortably clears the threshold
        pass
    report(9, "per-dimension error-bound coverage (delta=0.05)", ok,
           f"mean coverage {mean_cov:.3f}")

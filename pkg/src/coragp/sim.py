"""Closed-loop experiment engine.

Builds per-agent training sets, fits the GPs, and integrates the multi-agent
loop under the switching topology. The control input is held constant over
each integration step (zero-order hold); within a step the kernel vectors
computed for the neighbor means are reused by the correlation-aware weights.
Per-dimension error-bound values are evaluated every ``eta_every`` steps
because they require the posterior variances that the Cora modes otherwise
avoid.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrs

from . import gp
from .aggregation import (
    AggregationMode,
    AggregationSettings,
    BoundParams,
    aggregate_mean,
    cgp_weights,
    cora_weights,
    error_bound,
)
from .config import SimConfig
from .control import BoundReport, control_input, sync_error_all, theorem1_check
from .dynamics import NonFiniteStateError, forward_dynamics, unknown_f


@dataclass
class TrajectoryLog:
    """Per-step records on a uniform time grid (one record per step)."""

    t: np.ndarray
    topology: np.ndarray      # active graph index r(t)
    q: np.ndarray             # (S, n, m)
    qdot: np.ndarray
    u: np.ndarray
    f_hat: np.ndarray
    f_true: np.ndarray
    nu: np.ndarray
    weights: np.ndarray       # (S, n, n)
    err_norm: np.ndarray      # (S,)
    eta_steps: np.ndarray     # indices where eta was evaluated
    eta: np.ndarray           # (len(eta_steps), n, m)
    eta_tilde: np.ndarray     # (len(eta_steps), n)

    def __len__(self) -> int:
        return self.t.shape[0]


@dataclass
class RunResult:
    log: TrajectoryLog
    bound_report: BoundReport
    config_name: str
    mode: AggregationMode
    seed: int
    steady_state_error: float
    coverage: float           # fraction of eta-logged (step, agent, dim) covered
    bound_satisfied: bool     # ||e(t)|| below the spectral bound for t >= T_e
    out_of_support_fraction: float
    clamp_warnings: int


@dataclass
class MonteCarloSummary:
    mode: AggregationMode
    trials: int
    errors: np.ndarray        # per-trial steady-state mean ||e||
    coverage: np.ndarray
    bound_satisfied: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.errors.mean())

    @property
    def median(self) -> float:
        return float(np.median(self.errors))

    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.errors.std(ddof=1) / np.sqrt(len(self.errors)) \
            if len(self.errors) > 1 else 0.0
        return self.mean - half, self.mean + half


def generate_training_data(training: dict, n_agents: int, f_true=unknown_f,
                           rng: np.random.Generator | None = None):
    """Per-agent datasets (P_i, Y_i) sampled from the configured box.

    ``region_bias`` of the samples are drawn from an agent-specific quadrant
    of the box (agents cycle through the quadrants), the rest uniformly from
    the whole box. Targets are measurements of the dynamics residual
    H qdd + C qd + g - u = -f(q), i.e. the negated disturbance, plus
    N(0, noise_std^2) noise; the control law subtracts the learned estimate,
    which is what cancels the disturbance in closed loop.
    """
    if rng is None:
        rng = np.random.default_rng(int(training.get("seed", 0)))
    box = np.asarray(training["box"], dtype=np.float64)
    dim = box.shape[0]
    counts = training["sample_counts"]
    bias = float(training.get("region_bias", 0.0))
    noise = float(training.get("noise_std", 0.0))
    mid = box.mean(axis=1)
    datasets = []
    for i in range(n_agents):
        m_i = int(counts[i])
        in_region = rng.random(m_i) < bias
        lo = np.tile(box[:, 0], (m_i, 1))
        hi = np.tile(box[:, 1], (m_i, 1))
        # quadrant of the first two dims, cycling over agents
        quad = i % 4
        if dim >= 2:
            if quad in (0, 1):
                lo[in_region, 0] = mid[0]
            else:
                hi[in_region, 0] = mid[0]
            if quad in (0, 3):
                lo[in_region, 1] = mid[1]
            else:
                hi[in_region, 1] = mid[1]
        P = lo + rng.random((m_i, dim)) * (hi - lo)
        Y = -f_true(P)
        if Y.ndim == 1:
            Y = Y[:, None]
        Y = Y + noise * rng.standard_normal(Y.shape)
        datasets.append((P, Y))
    return datasets


class World:
    """Mutable closed-loop state plus the immutable experiment ingredients."""

    def __init__(self, config: SimConfig, seed: int | None = None,
                 mode: AggregationMode | None = None, datasets=None):
        self.config = config
        self.mode = mode or config.mode
        self.seed = config.seed if seed is None else int(seed)
        self.settings = AggregationSettings(
            mode=self.mode, sigma_g=config.aggregation.sigma_g,
            epsilon=config.aggregation.epsilon,
        )
        rng = np.random.default_rng(self.seed)
        if datasets is None:
            data_rng = np.random.default_rng(int(config.training.get("seed", 0)))
            datasets = generate_training_data(config.training, config.n_agents,
                                              rng=data_rng)
        self.datasets = datasets
        self.models = [gp.fit(P, Y, config.kernel) for P, Y in datasets]
        self.ensemble = config.ensemble
        self.switcher = config.make_switcher(seed=self.seed + 1)
        self.graph_idx = self.switcher.advance(0.0) if self.switcher else 0
        self._graph_cache = [
            (g.adjacency, g.leader_links, g.inclusive_adjacency)
            for g in self.ensemble.graphs
        ]
        n = config.n_agents
        q_lo, q_hi = config.initial["q_range"]
        qd_lo, qd_hi = config.initial["qdot_range"]
        m = config.training_box.shape[0]
        self.q = q_lo + rng.random((n, m)) * (q_hi - q_lo)
        self.qdot = qd_lo + rng.random((n, m)) * (qd_hi - qd_lo)
        self.t = 0.0
        self.n = n
        self.m = m

    # -- prediction layer --------------------------------------------------

    def predict(self, q, graph_idx, want_eta=False):
        """Disturbance estimates f_hat for all agents plus weights and
        (optionally) the per-dimension error-bound values."""
        cfg = self.config
        n, m = self.n, self.m
        mode = self.mode
        a_check = self._graph_cache[graph_idx][2]
        h = np.zeros((n, n))
        eta = np.zeros((n, m))
        eta_tilde = np.zeros(n)

        if mode is AggregationMode.WITHOUT_GP:
            np.fill_diagonal(h, 1.0)
            return np.zeros((n, m)), h, eta, eta_tilde
        if mode is AggregationMode.PERFECT:
            # oracle value of the learned residual, i.e. -f
            np.fill_diagonal(h, 1.0)
            return -unknown_f(q), h, eta, eta_tilde

        Q = np.ascontiguousarray(q)
        if mode is AggregationMode.INDIVIDUAL:
            # same batched operations as the cooperative path below so that
            # a self-loops-only topology reproduces these predictions exactly
            f_hat = np.empty((n, m))
            stds = np.empty(n)
            for i in range(n):
                kvecs = self.models[i].kernel_vectors(Q)
                f_hat[i] = self.models[i].mean_from_kvecs(kvecs)[i]
                if want_eta:
                    stds[i] = np.sqrt(self.models[i].variance_batch(Q, kvecs=kvecs)[i])
            np.fill_diagonal(h, 1.0)
            if want_eta:
                eta[:] = (2.0 * np.sqrt(cfg.bound.phi) * stds)[:, None]
                eta_tilde[:] = np.linalg.norm(eta, axis=1)
            return f_hat, h, eta, eta_tilde

        # cooperative modes: one kernel matrix per data set, shared between
        # the neighbor means and the aggregation weights
        kmats = [model.kernel_vectors(Q) for model in self.models]   # (M_l, n)
        mu = np.stack([self.models[l].mean_from_kvecs(kmats[l]) for l in range(n)])  # (n_l, n_q, m)
        if mode is AggregationMode.CGP or want_eta:
            variances = np.stack([
                self.models[l].variance_batch(Q, kvecs=kmats[l]) for l in range(n)
            ])  # (n_l, n_q)
        f_hat = np.empty((n, m))
        for i in range(n):
            if mode is AggregationMode.CGP:
                w = cgp_weights(i, {l: variances[l, i] for l in np.flatnonzero(a_check[i])},
                                a_check[i], self.settings)
            else:
                w = cora_weights(i, {l: kmats[l][:, i] for l in np.flatnonzero(a_check[i])},
                                 a_check[i], self.settings)
            h[i] = w.h
            f_hat[i] = aggregate_mean(w, mu[:, i, :])
            if want_eta:
                stds = np.sqrt(variances[:, i])[:, None] * np.ones((1, m))
                eta[i], eta_tilde[i] = error_bound(w, stds, cfg.bound)
        return f_hat, h, eta, eta_tilde

    # -- integration -------------------------------------------------------

    def _rhs(self, q, qdot, u):
        return forward_dynamics(q, qdot, u, self.config.el_params, f=unknown_f(q))

    def integrate(self, u, dt):
        q, qd = self.q, self.qdot
        if self.config.integrator == "Euler":
            qdd = self._rhs(q, qd, u)
            self.q = q + dt * qd
            self.qdot = qd + dt * qdd
            return
        k1q, k1v = qd, self._rhs(q, qd, u)
        k2q = qd + 0.5 * dt * k1v
        k2v = self._rhs(q + 0.5 * dt * k1q, k2q, u)
        k3q = qd + 0.5 * dt * k2v
        k3v = self._rhs(q + 0.5 * dt * k2q, k3q, u)
        k4q = qd + dt * k3v
        k4v = self._rhs(q + dt * k3q, k4q, u)
        self.q = q + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        self.qdot = qd + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)

    def step(self, dt, want_eta=False):
        """One closed-loop step; returns the per-step record as a dict."""
        cfg = self.config
        if self.switcher is not None:
            self.graph_idx = self.switcher.advance(self.t)
        adjacency, leader_links, _ = self._graph_cache[self.graph_idx]
        q0, qd0, _ = cfg.leader(self.t)
        f_hat, h, eta, eta_tilde = self.predict(self.q, self.graph_idx, want_eta=want_eta)
        nu, _, _ = sync_error_all(self.q, self.qdot, q0, qd0,
                                  adjacency, leader_links, cfg.gains.alpha)
        u = control_input(self.q, self.qdot, nu, cfg.gains.c, cfg.el_params, f_hat)
        record = {
            "t": self.t, "r": self.graph_idx, "q": self.q.copy(),
            "qdot": self.qdot.copy(), "u": u, "f_hat": f_hat,
            "f_true": unknown_f(self.q), "nu": nu, "h": h,
            "eta": eta, "eta_tilde": eta_tilde,
            "err_norm": float(np.sqrt(np.sum((self.q - q0) ** 2)
                                      + np.sum((self.qdot - qd0) ** 2))),
        }
        self.integrate(u, dt)
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qdot))):
            raise NonFiniteStateError(
                f"state became non-finite at t={self.t:.6f} (mode {self.mode.value})"
            )
        self.t += dt
        return record


def run(config: SimConfig, seed: int | None = None,
        mode: AggregationMode | None = None, datasets=None) -> RunResult:
    """Simulate the full horizon; deterministic under a fixed seed."""
    world = World(config, seed=seed, mode=mode, datasets=datasets)
    dt = config.dt
    steps = int(round(config.horizon / dt)) + 1
    n, m = world.n, world.m

    t = np.empty(steps)
    topo = np.empty(steps, dtype=np.int64)
    q = np.empty((steps, n, m))
    qd = np.empty((steps, n, m))
    u = np.empty((steps, n, m))
    f_hat = np.empty((steps, n, m))
    f_true_log = np.empty((steps, n, m))
    nu = np.empty((steps, n, m))
    h = np.empty((steps, n, n))
    err = np.empty(steps)
    eta_steps, eta_list, eta_tilde_list = [], [], []

    try:
        for k in range(steps):
            want_eta = (k % config.eta_every == 0) and world.mode not in (
                AggregationMode.WITHOUT_GP, AggregationMode.PERFECT)
            rec = world.step(dt, want_eta=want_eta)
            t[k] = rec["t"]
            topo[k] = rec["r"]
            q[k], qd[k], u[k] = rec["q"], rec["qdot"], rec["u"]
            f_hat[k], f_true_log[k], nu[k] = rec["f_hat"], rec["f_true"], rec["nu"]
            h[k] = rec["h"]
            err[k] = rec["err_norm"]
            if want_eta:
                eta_steps.append(k)
                eta_list.append(rec["eta"])
                eta_tilde_list.append(rec["eta_tilde"])
    except NonFiniteStateError:
        tail = max(0, k - 10)
        for j in range(tail, k):
            warnings.warn(
                f"pre-abort record t={t[j]:.4f} err={err[j]:.4e} q={q[j].tolist()}"
            )
        raise

    eta_steps = np.asarray(eta_steps, dtype=np.int64)
    log = TrajectoryLog(
        t=t, topology=topo, q=q, qdot=qd, u=u, f_hat=f_hat, f_true=f_true_log,
        nu=nu, weights=h, err_norm=err, eta_steps=eta_steps,
        eta=np.asarray(eta_list).reshape(-1, n, m),
        eta_tilde=np.asarray(eta_tilde_list).reshape(-1, n),
    )

    settle_t = config.settle_fraction * config.horizon
    steady = err[t >= settle_t]
    steady_err = float(steady.mean()) if steady.size else float("nan")

    # coverage of the per-dimension bound along the trajectory; the GP
    # estimates the residual -f, so the true error is |f_hat + f|
    if eta_steps.size and log.eta.size:
        abs_err = np.abs(f_hat[eta_steps] + f_true_log[eta_steps])
        coverage = float(np.mean(abs_err <= log.eta + 1e-15))
        eta_tilde_max = float(np.linalg.norm(log.eta_tilde, axis=1).max())
    else:
        coverage = float("nan")
        eta_tilde_max = 0.0

    report = theorem1_check(config.ensemble, config.gains, config.el_params,
                            eta_tilde=eta_tilde_max,
                            leader_velocity_bound=config.leader.velocity_bound,
                            workspace_grid=config.workspace_grid)
    # literal inequality; when the stability condition fails the bound is
    # infinite and this is vacuously true, flagged by report.is_pd
    bound_ok = bool(np.all(err[t >= settle_t] <= report.error_bound))

    box = config.training_box
    inside = np.all((q >= box[:, 0]) & (q <= box[:, 1]), axis=-1)
    out_frac = float(1.0 - inside.mean())

    return RunResult(
        log=log, bound_report=report, config_name=config.raw["name"],
        mode=world.mode, seed=world.seed, steady_state_error=steady_err,
        coverage=coverage, bound_satisfied=bound_ok,
        out_of_support_fraction=out_frac,
        clamp_warnings=sum(mdl.clamp_warnings for mdl in world.models),
    )


def monte_carlo(config: SimConfig, trials: int | None = None,
                mode: AggregationMode | None = None,
                base_seed: int | None = None) -> MonteCarloSummary:
    """Independent-seed trial batch for one aggregation mode."""
    trials = config.mc_trials if trials is None else int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    mode = mode or config.mode
    base = config.seed if base_seed is None else int(base_seed)
    seeds = np.random.SeedSequence(base).generate_state(trials)
    errors, coverage, bound_ok = [], [], []
    for s in seeds:
        result = run(config, seed=int(s), mode=mode)
        errors.append(result.steady_state_error)
        coverage.append(result.coverage)
        bound_ok.append(result.bound_satisfied)
    return MonteCarloSummary(
        mode=mode, trials=trials, errors=np.asarray(errors),
        coverage=np.asarray(coverage), bound_satisfied=np.asarray(bound_ok),
    )


# -- aggregation-weight timing benchmark -----------------------------------

_SQ2PI = np.sqrt(2.0 * np.pi)


def _time_batched(fn, repetitions, n_queries):
    times = []
    fn()  # warm-up
    for _ in range(repetitions):
        start = time.perf_counter()
        fn()
        times.append((time.perf_counter() - start) / n_queries)
    times = np.asarray(times)
    return float(times.mean()), float(np.median(times))


def bench_weights(config: SimConfig, modes=None, m_grid=(100, 200, 300),
                  n_queries: int = 1000, repetitions: int = 7,
                  chunk: int | None = None,
                  rng: np.random.Generator | None = None):
    """Per-query aggregation-weight timing per mode and training-set size.

    One "computation" is one agent's weight vector with all n agents as
    inclusive neighbors. Queries are processed in blocks of ``chunk``
    (default: the number of agents, the batch the controller presents in one
    simulation step); one timed pass covers all ``n_queries`` queries and is
    repeated ``repetitions`` times, reporting mean and median per-query time
    from a monotonic clock.

    The kernel vectors are computed outside the timed region (they are
    shared with the posterior means, so the weights get them for free); the
    CGP timing includes the posterior-variance solves it requires. Every
    mode is timed through its lowest-overhead entry point (the compiled
    weight core for CoraAvg, the LAPACK solver directly for CGP) so that the
    measured scaling reflects the algorithm rather than wrapper overhead.
    The per-neighbor sample counts follow the configured proportions
    rescaled so the largest equals M, keeping the top-k selection
    nontrivial.
    """
    if modes is None:
        modes = [AggregationMode.CORA_AVG, AggregationMode.CORA_TOP,
                 AggregationMode.CGP, AggregationMode.INDIVIDUAL]
    rng = rng or np.random.default_rng(0)
    n = config.n_agents
    chunk = n if chunk is None else int(chunk)
    sigma_g = config.gains.sigma_g
    epsilon = config.aggregation.epsilon
    box = config.training_box
    base_counts = np.asarray(config.training["sample_counts"], dtype=np.float64)
    from . import backend

    rows = []
    for M in m_grid:
        counts = np.maximum(1, np.rint(base_counts * M / base_counts.max())).astype(int)
        training = dict(config.training, sample_counts=counts.tolist())
        datasets = generate_training_data(training, n, rng=rng)
        models = [gp.fit(P, Y, config.kernel) for P, Y in datasets]
        Q = box[:, 0] + rng.random((n_queries, box.shape[0])) * (box[:, 1] - box[:, 0])
        kmats = [mdl.kernel_vectors(Q) for mdl in models]  # (M_l, n_queries)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
        kcat = np.vstack(kmats)
        starts = range(0, n_queries, chunk)
        # per-chunk copies prepared along with the kernel vectors; the CGP
        # solver wants column-major right-hand sides
        cat_blocks = [np.ascontiguousarray(kcat[:, s:s + chunk]) for s in starts]
        model_blocks = [[np.ascontiguousarray(K[:, s:s + chunk]) for K in kmats]
                        for s in starts]
        solver_blocks = [[np.asfortranarray(K[:, s:s + chunk]) for K in kmats]
                         for s in starts]
        factors = [np.asfortranarray(mdl.cholesky[0]) for mdl in models]
        lowers = [int(mdl.cholesky[1]) for mdl in models]
        m_min = int(counts.min())
        out = np.empty((n, chunk), dtype=np.float64)

        def run_avg():
            impl = backend._impl.cora_avg_weights_impl
            for blk in cat_blocks:
                impl(blk, offsets, sigma_g, out)

        def gaussian_weights(norms):
            normalized = norms / norms.sum(axis=0)
            peak = normalized.max(axis=0)
            w = np.exp(-((normalized - peak) ** 2) / (2 * sigma_g**2)) / (sigma_g * _SQ2PI)
            return w / w.sum(axis=0)

        def run_top():
            for blocks in model_blocks:
                norms = np.stack([
                    np.linalg.norm(
                        np.partition(B, B.shape[0] - m_min, axis=0)[B.shape[0] - m_min:],
                        axis=0)
                    for B in blocks
                ])
                gaussian_weights(norms)

        var = np.empty((n, chunk))
        prior = config.kernel.signal_std**2

        def run_cgp():
            for blocks in solver_blocks:
                for l in range(n):
                    B = blocks[l]
                    V, _ = dpotrs(factors[l], B, lower=lowers[l])
                    var[l] = prior - np.einsum("mq,mq->q", B, V)
                inv = 1.0 / np.maximum(var, epsilon)
                inv / inv.sum(axis=0)

        for mode in modes:
            if mode is AggregationMode.INDIVIDUAL:
                rows.append({"mode": mode.value, "M": int(M),
                             "mean_ms": None, "median_ms": None})
                continue
            fn = {AggregationMode.CORA_AVG: run_avg,
                  AggregationMode.CORA_TOP: run_top,
                  AggregationMode.CGP: run_cgp}[mode]
            mean_s, median_s = _time_batched(fn, repetitions, n_queries)
            rows.append({"mode": mode.value, "M": int(M),
                         "mean_ms": mean_s * 1e3, "median_ms": median_s * 1e3})
    return rows

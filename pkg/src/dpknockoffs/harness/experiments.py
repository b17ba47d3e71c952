"""Scenario runners producing long-format result tables."""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .._rng import stream
from ..debias import debias, rho_n
from ..filter import StatisticFamily, feature_statistics, knockoff_threshold, select
from ..model import DesignDistribution, load_csv
from ..privacy import PrivacyBudget, compute_w, gaussian_privatize_moments, jlt_privatize
from ..knockoff import augment
from ..solver import SolverConfig, default_lambda, lasso_data, lasso_gram
from .. import theory
from .config import ConfigError, ExperimentConfig
from .pipeline import RunSettings, memory_estimate, run_gaussian_repetition, run_mu_grid, score_selection

FIELDS = ("scenario", "seed", "n", "epsilon", "mu", "q", "method", "metric", "value", "se", "count")


@dataclass
class ResultTable:
    """Append-only long-format table with a fixed schema."""

    rows: list = field(default_factory=list)

    def append(self, **row):
        missing = set(FIELDS) - set(row)
        extra = set(row) - set(FIELDS)
        if missing or extra:
            raise ValueError(f"row schema mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        self.rows.append(tuple(row[k] for k in FIELDS))

    def add_summary(self, values, **keys):
        """Append mean, standard error and count of ``values`` (NaNs dropped)."""
        arr = np.asarray([v for v in values if v is not None], dtype=float)
        arr = arr[np.isfinite(arr)]
        m = arr.size
        mean = float(arr.mean()) if m else math.nan
        se = float(arr.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
        self.append(value=mean, se=se, count=m, **keys)

    def extend(self, other: "ResultTable"):
        self.rows.extend(other.rows)

    def __len__(self):
        return len(self.rows)

    def select(self, **crit):
        idx = {k: FIELDS.index(k) for k in crit}
        return [dict(zip(FIELDS, r)) for r in self.rows
                if all(r[idx[k]] == v for k, v in crit.items())]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(FIELDS)
        for r in self.rows:
            wr.writerow([_fmt(v) for v in r])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _rep_seed(base, rep):
    """Independent per-repetition integer seed derived from the run seed."""
    return int(stream(base, "repetition", rep).integers(0, 2**31 - 1))


def check_memory(cfg: ExperimentConfig):
    need = memory_estimate(max(cfg.n), cfg.p, cfg.r)
    limit = cfg.memory_limit_gb * 2**30
    if need > limit:
        raise ConfigError(
            f"estimated peak memory {need / 2**30:.2f} GiB exceeds the limit {cfg.memory_limit_gb} GiB"
        )
    return need


def _settings(cfg: ExperimentConfig, n, eps) -> RunSettings:
    lam = cfg.lam if cfg.lam is not None else default_lambda(cfg.sigma, n, cfg.p, cfg.r, cfg.C_lambda)
    return RunSettings(n=n, p=cfg.p, s0=cfg.s0, sigma=cfg.sigma, r=cfg.r, epsilon=eps,
                       delta=cfg.delta, lam=lam, q=cfg.q[0], plus=cfg.plus[0],
                       t_fixed=cfg.t_fixed, sigma_mode=cfg.sigma_mode)


def _variants(cfg: ExperimentConfig, scenario):
    plus = (False, True) if scenario == "data-threshold" else cfg.plus
    out = [("knockoff+" if pl else "knockoff", q, pl) for q in cfg.q for pl in plus]
    if cfg.t_fixed is not None:
        out.append(("fixed-t", math.nan, None))
    return out


def _grid_task(args):
    settings, mu_grid, seed = args
    return run_mu_grid(settings, mu_grid, seed)


def _map(fn, tasks, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _theory_w(settings: RunSettings, mu_grid):
    B = settings.row_bound(max(abs(m) for m in mu_grid))
    return compute_w(B, settings.epsilon, settings.delta, settings.r)


def _empirical(cfg: ExperimentConfig, scenario, table: ResultTable):
    for n in cfg.n:
        for eps in cfg.epsilon:
            s = _settings(cfg, n, eps)
            seeds = [_rep_seed(cfg.seed, k) for k in range(cfg.repetitions)]
            reps = _map(_grid_task, [(s, cfg.mu, sd) for sd in seeds], cfg.workers)
            for i, mu in enumerate(cfg.mu):
                outs = [rep[i] for rep in reps]
                for method, q, plus in _variants(cfg, scenario):
                    fdps, pows, ts, ks = [], [], [], []
                    for o in outs:
                        t = s.t_fixed if plus is None else knockoff_threshold(o.W, q, plus)
                        sel = select(o.W, t)
                        fdp, pw = score_selection(sel, s.s0)
                        fdps.append(fdp)
                        pows.append(pw)
                        ts.append(t if math.isfinite(t) else math.nan)
                        ks.append(sel.size)
                    keys = dict(scenario=scenario, seed=cfg.seed, n=n, epsilon=eps, mu=mu, q=q, method=method)
                    table.add_summary(pows, metric="power", **keys)
                    table.add_summary(fdps, metric="fdp", **keys)
                    table.add_summary(ts, metric="t_hat", **keys)
                    table.add_summary(ks, metric="k_selected", **keys)
                keys = dict(scenario=scenario, seed=cfg.seed, n=n, epsilon=eps, mu=mu, q=math.nan,
                            method="diagnostic")
                table.add_summary([o.identity_error for o in outs], metric="eta_identity_error", **keys)
                table.add_summary([float(o.converged) for o in outs], metric="solver_converged", **keys)
    return table


def theory_overlay(cfg: ExperimentConfig, scenario=None) -> ResultTable:
    """Predicted alpha_hat, alpha, beta and threshold per grid point."""
    scenario = scenario or cfg.scenario
    table = ResultTable()
    c0 = cfg.s0 / cfg.p
    if not 0 < c0 < 1:
        raise ConfigError("theory needs 0 < s0 < p")
    for n in cfg.n:
        for eps in cfg.epsilon:
            s = _settings(cfg, n, eps)
            w = _theory_w(s, cfg.mu)
            sr = cfg.sigma * rho_n(n, s.r, w)
            phi_w = 1 + w * w / n
            for mu in cfg.mu:
                for method, q, plus in _variants(cfg, scenario):
                    if plus is None:
                        t = s.t_fixed
                    else:
                        t = theory.solve_threshold(q, mu, s.lam, c0, sr, n_mc=cfg.n_mc, p=cfg.p,
                                                   phi_w=phi_w, seed=cfg.seed)
                    keys = dict(scenario=scenario, seed=cfg.seed, n=n, epsilon=eps, mu=mu, q=q,
                                method=f"theory:{method}")
                    if math.isfinite(t):
                        fam = StatisticFamily("lcd", a=s.lam / sr, phi_w=phi_w)
                        est = theory.theory_point(theory.TheoryInputs(mu / sr, t / sr, c0, fam, cfg.n_mc, cfg.seed))
                        vals = [("alpha_hat", est.alpha_hat, est.se_alpha_hat), ("alpha", est.alpha, est.se_alpha),
                                ("beta", est.beta, est.se_beta)]
                    else:
                        vals = [("alpha_hat", math.nan, math.nan), ("alpha", 0.0, 0.0), ("beta", 0.0, 0.0)]
                    for metric, v, se in vals:
                        table.append(metric=metric, value=float(v), se=float(se), count=cfg.n_mc, **keys)
                    table.append(metric="t", value=float(t), se=0.0, count=cfg.n_mc, **keys)
    return table


def add_log_ratio(table: ResultTable, empirical: ResultTable, theoretical: ResultTable, scenario):
    """Append log(empirical power / theoretical power) wherever both exist."""
    theo = {(r["n"], r["epsilon"], r["mu"], r["q"], r["method"].split(":", 1)[1]): r
            for r in theoretical.select(metric="beta")}
    for r in empirical.select(metric="power"):
        key = (r["n"], r["epsilon"], r["mu"], r["q"], r["method"])
        t = theo.get(key)
        if t is None or not (r["value"] > 0 and t["value"] > 0):
            continue
        table.append(scenario=scenario, seed=r["seed"], n=r["n"], epsilon=r["epsilon"], mu=r["mu"],
                     q=r["q"], method=r["method"], metric="log_power_ratio",
                     value=math.log(r["value"] / t["value"]),
                     se=r["se"] / r["value"] if r["value"] > 0 else math.nan, count=r["count"])


def _tradeoff(cfg: ExperimentConfig, table: ResultTable):
    c0 = cfg.s0 / cfg.p
    for n in cfg.n:
        for eps in cfg.epsilon:
            s = _settings(cfg, n, eps)
            w = _theory_w(s, cfg.mu)
            sr = cfg.sigma * rho_n(n, s.r, w)
            for mu in cfg.mu:
                t_grid = np.geomspace(1e-3 * sr, 10 * (mu + s.lam) + sr, 400)
                fdr, power = theory.power_fdr_curve(mu, s.lam, c0, sr, 1 + w * w / n, t_grid,
                                                    cfg.n_mc, cfg.seed)
                best = theory.power_at_fdr(cfg.fdr_grid, fdr, power)
                for lev, pw in zip(cfg.fdr_grid, best):
                    table.append(scenario="tradeoff", seed=cfg.seed, n=n, epsilon=eps, mu=mu, q=lev,
                                 method="theory", metric="power_at_fdr", value=float(pw),
                                 se=math.nan, count=cfg.n_mc)
    return table


def _mechanism_compare(cfg: ExperimentConfig, table: ResultTable):
    for n in cfg.n:
        for eps in cfg.epsilon:
            s = _settings(cfg, n, eps)
            seeds = [_rep_seed(cfg.seed, k) for k in range(cfg.repetitions)]
            jlt = _map(_grid_task, [(s, cfg.mu, sd) for sd in seeds], cfg.workers)
            for i, mu in enumerate(cfg.mu):
                keys = dict(scenario="mechanism-compare", seed=cfg.seed, n=n, epsilon=eps, mu=mu,
                            q=s.q)
                pows = []
                for rep in jlt:
                    t = s.t_fixed if s.t_fixed is not None else knockoff_threshold(rep[i].W, s.q, s.plus)
                    pows.append(score_selection(select(rep[i].W, t), s.s0)[1])
                table.add_summary(pows, method="jlt", metric="power", **keys)
                gs = [run_gaussian_repetition(s, mu, sd) for sd in seeds]
                ok = [g.psd and g.converged and not g.nonconvex for g in gs]
                g1 = [g.power if good else 0.0 for g, good in zip(gs, ok)]
                g2 = [g.power for g in gs]
                g3 = [g.power for g, c in zip(gs, (g.converged for g in gs)) if c]
                table.add_summary(g1, method="G1", metric="power", **keys)
                table.add_summary(g2, method="G2", metric="power", **keys)
                table.add_summary(g3, method="G3", metric="power", **keys)
                table.add_summary([float(not g.psd) for g in gs], method="gaussian", metric="non_psd_rate", **keys)
                table.add_summary([float(g.converged) for g in gs], method="gaussian", metric="converged_rate", **keys)
    return table


def run(cfg: ExperimentConfig) -> ResultTable:
    """Run the configured scenario and return its aggregated rows."""
    check_memory(cfg)
    table = ResultTable()
    sc = cfg.scenario
    if sc in ("power-vs-mu", "data-threshold"):
        _empirical(cfg, sc, table)
    elif sc == "error-convergence":
        emp = _empirical(cfg, sc, ResultTable())
        theo = theory_overlay(cfg, sc)
        table.extend(emp)
        table.extend(theo)
        add_log_ratio(table, emp, theo, sc)
    elif sc == "tradeoff":
        _tradeoff(cfg, table)
    elif sc == "mechanism-compare":
        _mechanism_compare(cfg, table)
    elif sc == "real-data":
        if not cfg.data:
            raise ConfigError("real-data scenario needs 'data' (CSV path)")
        return real_data_run(cfg.data, cfg)
    return table


# -- real data --------------------------------------------------------------

def empirical_marginal_knockoffs(X, rng):
    """Resample each column independently from its empirical marginal."""
    n, p = X.shape
    idx = rng.integers(0, n, size=(n, p))
    return np.take_along_axis(X, idx, axis=0)


@dataclass
class RealDataResult:
    names: tuple
    selections: list
    table: ResultTable
    non_psd_rate: float = math.nan


def real_data_selections(csv_path, cfg: ExperimentConfig) -> RealDataResult:
    """Repeat privatized knockoff selection on a CSV dataset."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ds = load_csv(csv_path, response_column=cfg.response)
    X, y = np.asarray(ds.X), np.asarray(ds.y)
    n, p = X.shape
    names = ds.columns or tuple(f"x{j + 1}" for j in range(p))
    eps = cfg.epsilon[0]
    q, plus = cfg.q[0], cfg.plus[0]
    budget = PrivacyBudget(eps, cfg.delta)
    lam = cfg.lam if cfg.lam is not None else default_lambda(1.0, n, p, cfg.r, cfg.C_lambda)
    selections, non_psd = [], []
    for k in range(cfg.repetitions):
        seed = _rep_seed(cfg.seed, k)
        Xk = empirical_marginal_knockoffs(X, stream(seed, "real-knockoff"))
        A = augment(X, Xk, y)
        B = float(np.max(A.row_norms()))
        if cfg.mechanism == "jlt":
            priv = jlt_privatize(A, budget, cfg.r, seed, B=B)
            sol = lasso_data(priv.features, priv.ystar, n, SolverConfig(lam))
            est = debias(sol.theta, priv.features, priv.ystar, priv.w, n)
            W = feature_statistics(est.theta_u, StatisticFamily.lcd(lam, priv.w, n))
        else:
            mom = gaussian_privatize_moments(A, budget, seed, B=B)
            non_psd.append(not mom.is_psd())
            sol = lasso_gram(mom.G, mom.c, n, SolverConfig(lam))
            W = np.abs(sol.theta[:p]) - np.abs(sol.theta[p:])
            if sol.nonconvex_detected or not sol.converged:
                W = np.zeros(p)
        t = cfg.t_fixed if cfg.t_fixed is not None else knockoff_threshold(W, q, plus)
        selections.append(select(W, t))
    table = ResultTable()
    reps = cfg.repetitions
    for j, name in enumerate(names):
        hits = sum(int(j in set(sel.tolist())) for sel in selections)
        table.append(scenario="real-data", seed=cfg.seed, n=n, epsilon=eps, mu=math.nan, q=q,
                     method=cfg.mechanism, metric=f"selection_frequency:{name}", value=hits / reps,
                     se=math.sqrt(hits / reps * (1 - hits / reps) / reps), count=reps)
    rate = float(np.mean(non_psd)) if non_psd else math.nan
    if non_psd:
        table.append(scenario="real-data", seed=cfg.seed, n=n, epsilon=eps, mu=math.nan, q=q,
                     method=cfg.mechanism, metric="non_psd_rate", value=rate,
                     se=math.sqrt(rate * (1 - rate) / reps), count=reps)
    return RealDataResult(tuple(names), selections, table, rate)


def real_data_run(csv_path, cfg: ExperimentConfig) -> ResultTable:
    return real_data_selections(csv_path, cfg).table


def metadata_block(cfg: ExperimentConfig, extra=None) -> str:
    """Key-value text block echoed next to CSV outputs."""
    lines = [cfg.to_text().rstrip()]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"

"""Monte-Carlo experiment orchestration and figure-dataset emission.

One realization = one random drop of terminals plus one fading draw.  For
each budget value delta the proposed pipeline runs group-sparse bisection,
thresholds the active modules, and refines powers/phases; the matched random
selection (MRS) baseline reuses the proposed cardinality on the same
channels, and the no-surface baseline optimizes powers over the direct links
only.  Everything is a pure function of (spec, master_seed): worker count
and scheduling cannot change the emitted CSV bytes.
"""

from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import altopt, metrics, sparsity
from .channel import draw_channels, place_terminals, substream
from .model import ModuleMask, NetworkConfig, PowerAllocation, validate

__all__ = [
    "ExperimentSpec",
    "SweepRecord",
    "realization_seed",
    "run_proposed",
    "run_mrs",
    "run_no_irs",
    "run_realization",
    "run_sweep",
    "aggregate",
    "write_records",
    "FIGURE_METRICS",
]

_TAG_MRS = 21
_TAG_ALT_PROPOSED = 22
_TAG_ALT_MRS = 23

ALL_SCHEMES = ("proposed", "mrs", "no_irs")

FIGURE_METRICS = {
    "fig_a.csv": "max_min_sinr",
    "fig_b.csv": "n_active_modules",
    "fig_c.csv": "total_transmit_power_w",
    "fig_d.csv": "ee",
}


@dataclass
class ExperimentSpec:
    """Sweep description: scenario, budget grid, realization count, seed."""

    config: NetworkConfig
    delta_grid: tuple
    n_realizations: int = 200
    master_seed: int = 0
    schemes: tuple = ALL_SCHEMES
    output_dir: str | None = None
    gamma_tol: float = 1e-3
    block_threshold_rel: float = 1e-4
    solver_tol_feas: float = 1e-7
    solver_tol_gap: float = 1e-7
    altopt_tol: float = 1e-4
    altopt_max_outer: int = 100

    def __post_init__(self):
        validate(self.config)
        grid = tuple(float(d) for d in self.delta_grid)
        if not grid or any(d <= 0 for d in grid):
            raise ValueError("delta grid values must be positive")
        bound = sparsity.delta_upper_bound(self.config)
        if any(d > bound for d in grid):
            warnings.warn(
                f"delta grid extends past the favorable upper bound {bound:.3f}; "
                "selection will saturate there", stacklevel=2)
        object.__setattr__(self, "delta_grid", grid)
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")
        unknown = set(self.schemes) - set(ALL_SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")

    def params_for(self, delta: float) -> sparsity.SparsityParams:
        return sparsity.SparsityParams(
            delta=delta,
            gamma_tol=self.gamma_tol,
            block_threshold_rel=self.block_threshold_rel,
            solver_tol_feas=self.solver_tol_feas,
            solver_tol_gap=self.solver_tol_gap,
        )


@dataclass
class SweepRecord:
    scheme: str
    delta: float
    realization: int
    max_min_sinr: float
    max_min_sinr_db: float
    n_active_modules: int
    total_transmit_power_w: float
    sum_rate: float
    ee: float

    FIELDS = ("scheme", "delta", "realization", "max_min_sinr", "max_min_sinr_db",
              "n_active_modules", "total_transmit_power_w", "sum_rate", "ee")


def realization_seed(master_seed: int, realization: int) -> int:
    """Stable per-realization seed derived from the master seed."""
    return int(np.random.SeedSequence([int(master_seed), int(realization)]).generate_state(1, np.uint64)[0])


def _derive(seed: int, tag: int, index: int = 0) -> int:
    return int(np.random.SeedSequence([int(seed), tag, int(index)]).generate_state(1, np.uint64)[0])


def _record(scheme, delta, realization, state, mask, config, aggregate) -> SweepRecord:
    phi = np.asarray(state.phases.phi)
    phi_bar = phi[:, None] * np.sqrt(state.powers.p)[None, :]
    sinrs = metrics.sinr_quadratic(aggregate, phi_bar, config.sigma2)
    rate = metrics.sum_rate(sinrs)
    power = metrics.total_power(state.powers, mask, config)
    gamma = float(state.gamma_out)
    return SweepRecord(
        scheme=scheme,
        delta=float(delta),
        realization=int(realization),
        max_min_sinr=gamma,
        max_min_sinr_db=10.0 * np.log10(max(gamma, 1e-300)),
        n_active_modules=mask.cardinality,
        total_transmit_power_w=float(np.sum(state.powers.p)),
        sum_rate=rate,
        ee=metrics.energy_efficiency(rate, power),
    )


def _draw(spec: ExperimentSpec, realization: int):
    seed = realization_seed(spec.master_seed, realization)
    geometry = place_terminals(spec.config, seed)
    channels = draw_channels(spec.config, geometry, seed)
    aggregate = metrics.precompute(channels)
    return seed, channels, aggregate


def run_proposed(spec: ExperimentSpec, realization: int, _drawn=None):
    """Group-sparse pipeline for every delta on one realization.

    Returns (records, cardinalities per delta).  Bisection evaluations are
    shared across the delta grid (the minimizer is weight-independent), and
    the final optimization is reused whenever two deltas select the same
    module set.
    """
    config = spec.config
    seed, channels, aggregate = _drawn if _drawn is not None else _draw(spec, realization)
    cache: dict = {}
    alt_by_mask: dict = {}
    records, cards = [], {}
    for delta in spec.delta_grid:
        params = spec.params_for(delta)
        sol = sparsity.bisect_gamma(aggregate, config, params, cache=cache)
        mask = sparsity.identify_modules(sol, config, params)
        key = mask.active.tobytes()
        if key not in alt_by_mask:
            alt_by_mask[key] = altopt.algorithm1(
                channels, mask, config, tol=spec.altopt_tol, max_outer=spec.altopt_max_outer,
                seed=_derive(seed, _TAG_ALT_PROPOSED), aggregate=aggregate)
        state = alt_by_mask[key]
        records.append(_record("proposed", delta, realization, state, mask, config, aggregate))
        cards[delta] = mask.cardinality
    return records, cards


def run_mrs(spec: ExperimentSpec, realization: int, cards: dict, _drawn=None):
    """Random module selection with the proposed scheme's cardinality per delta."""
    config = spec.config
    seed, channels, aggregate = _drawn if _drawn is not None else _draw(spec, realization)
    records = []
    alt_by_card: dict = {}
    for delta in spec.delta_grid:
        card = cards[delta]
        if card < 1:
            raise sparsity.DegenerateSolutionError("paired cardinality is zero")
        if card not in alt_by_card:
            rng = substream(seed, _TAG_MRS, card)
            chosen = rng.choice(config.M, size=card, replace=False)
            active = np.zeros(config.M, dtype=bool)
            active[chosen] = True
            mask = ModuleMask(active=active)
            state = altopt.algorithm1(
                channels, mask, config, tol=spec.altopt_tol, max_outer=spec.altopt_max_outer,
                seed=_derive(seed, _TAG_ALT_MRS), aggregate=aggregate)
            alt_by_card[card] = (mask, state)
        mask, state = alt_by_card[card]
        records.append(_record("mrs", delta, realization, state, mask, config, aggregate))
    return records


def run_no_irs(spec: ExperimentSpec, realization: int, _drawn=None):
    """Direct-link baseline: no reflecting elements, powers still optimized."""
    config = spec.config
    seed, channels, _ = _drawn if _drawn is not None else _draw(spec, realization)
    gains = np.abs(channels.d) ** 2  # [j, k] = |ST j -> DT k|^2
    p, gamma = altopt.maxmin_powers(gains, config)
    powers = PowerAllocation(p=p)
    empty = ModuleMask(active=np.zeros(config.M, dtype=bool))
    sig = np.diag(gains) * p
    interference = gains.T @ p - np.diag(gains) * p
    sinrs = sig / (interference + config.sigma2)
    rate = metrics.sum_rate(sinrs)
    power = metrics.total_power(powers, empty, config)
    records = []
    for delta in spec.delta_grid:
        records.append(SweepRecord(
            scheme="no_irs",
            delta=float(delta),
            realization=int(realization),
            max_min_sinr=float(gamma),
            max_min_sinr_db=10.0 * np.log10(max(float(gamma), 1e-300)),
            n_active_modules=0,
            total_transmit_power_w=float(np.sum(p)),
            sum_rate=rate,
            ee=metrics.energy_efficiency(rate, power),
        ))
    return records


def run_realization(spec: ExperimentSpec, realization: int):
    """All requested schemes on one realization; failures become tags."""
    drawn = _draw(spec, realization)
    records, failures = [], []
    cards = None
    if "proposed" in spec.schemes:
        try:
            recs, cards = run_proposed(spec, realization, _drawn=drawn)
            records.extend(recs)
        except Exception as exc:  # noqa: BLE001 - failures are data here
            failures.append(("proposed", realization, f"{type(exc).__name__}: {exc}"))
    if "mrs" in spec.schemes:
        if cards is None:
            failures.append(("mrs", realization, "no paired cardinalities (proposed failed or skipped)"))
        else:
            try:
                records.extend(run_mrs(spec, realization, cards, _drawn=drawn))
            except Exception as exc:  # noqa: BLE001
                failures.append(("mrs", realization, f"{type(exc).__name__}: {exc}"))
    if "no_irs" in spec.schemes:
        try:
            records.extend(run_no_irs(spec, realization, _drawn=drawn))
        except Exception as exc:  # noqa: BLE001
            failures.append(("no_irs", realization, f"{type(exc).__name__}: {exc}"))
    return records, failures


def run_sweep(spec: ExperimentSpec, n_workers: int = 1, progress=None):
    """Run every realization; returns (records, failures) in canonical order."""
    records, failures = [], []
    if n_workers > 1:
        import multiprocessing as mp

        with mp.Pool(n_workers) as pool:
            out = pool.starmap(run_realization, [(spec, r) for r in range(spec.n_realizations)])
        for recs, fails in out:
            records.extend(recs)
            failures.extend(fails)
    else:
        for r in range(spec.n_realizations):
            recs, fails = run_realization(spec, r)
            records.extend(recs)
            failures.extend(fails)
            if progress is not None:
                progress(r + 1, spec.n_realizations)
    records.sort(key=lambda t: (t.scheme, t.delta, t.realization))
    failures.sort()
    if spec.output_dir:
        write_records(spec.output_dir, records, failures)
    return records, failures


def aggregate(records):
    """Per-(scheme, delta) mean and standard error of every metric.

    Returns {(scheme, delta): {metric: (mean, stderr, n)}}.  EE is averaged
    per-realization (mean of rate/power, not ratio of means).
    """
    if not records:
        raise ValueError("no records to aggregate")
    metrics_names = ("max_min_sinr", "max_min_sinr_db", "n_active_modules",
                     "total_transmit_power_w", "sum_rate", "ee")
    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.delta), []).append(rec)
    out = {}
    for key, recs in sorted(groups.items()):
        stats = {}
        for name in metrics_names:
            vals = np.array([getattr(t, name) for t in recs], dtype=float)
            n = vals.size
            mean = float(vals.mean())
            stderr = float(vals.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
            stats[name] = (mean, stderr, n)
        out[key] = stats
    return out


def write_records(output_dir, records, failures=()):
    """Emit records.csv, failures.csv and the four figure datasets (RFC 4180)."""
    os.makedirs(output_dir, exist_ok=True)
    with open(os.path.join(output_dir, "records.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SweepRecord.FIELDS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, f)) for f in SweepRecord.FIELDS])
    if failures:
        with open(os.path.join(output_dir, "failures.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "realization", "error"])
            for row in failures:
                w.writerow(row)
    stats = aggregate(records) if records else {}
    for fname, metric in FIGURE_METRICS.items():
        with open(os.path.join(output_dir, fname), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "delta", "mean", "stderr", "n"])
            for (scheme, delta), st in stats.items():
                mean, stderr, n = st[metric]
                w.writerow([scheme, _fmt(delta), _fmt(mean), _fmt(stderr), n])


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v

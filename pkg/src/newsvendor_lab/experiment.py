"""Monte Carlo regret engine, scaling fits and concentration measurements.

Regret is accounted with the analytic expected cost ``C(x)``: for every
replication the engine draws a demand stream, asks the policy for the whole
decision path, and evaluates ``C(x_t) - C(x*)`` in every period. Per-period
statistics are kept only on a recording grid, but cumulative regret is summed
over all periods, so it is exact for the sampled paths.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cost import CostModel, LinearCost, cost_from_config, optimal_quantity
from .demand import DemandModel, LocalFlatDemand, demand_from_config
from .errors import ConfigError, ParameterDomainError
from .policy import Policy, policy_from_config
from .rng import check_seed, replication_rng

#: burn-in before fitting cumulative regret against ln t
FIT_T_MIN = 100
LOG_GRID_RATIO = 1.25
CSV_COLUMNS = ("t", "mean_inst_regret", "se", "cum_regret", "good_event_freq", "mean_g_sq")


class InsufficientGridError(ValueError):
    pass


def log_grid(horizon: int, ratio: float = LOG_GRID_RATIO) -> np.ndarray:
    """Rounded powers of ``ratio`` up to ``horizon``, always including 1 and ``horizon``."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    n = int(math.floor(math.log(horizon) / math.log(ratio))) + 1
    pts = np.rint(ratio ** np.arange(n + 1)).astype(np.int64)
    pts = pts[pts <= horizon]
    return np.unique(np.concatenate([[1], pts, [horizon]]))


# ---------------------------------------------------------------------------
# configuration


def _mentioned_key(message: str, record: Mapping) -> str | None:
    best = None
    for key in record:
        pos = message.find(str(key))
        if pos >= 0 and (best is None or pos < best[0]):
            best = (pos, key)
    return None if best is None else best[1]


def _build(section: str, record, factory, *args):
    if not isinstance(record, Mapping):
        raise ConfigError(f"'{section}' must be an object with a 'kind' field", section)
    try:
        return factory(record, *args)
    except (ParameterDomainError, TypeError, ValueError) as exc:
        key = _mentioned_key(str(exc), {k: None for k in record if k != "kind"})
        path = f"{section}.{key}" if key else section
        raise ConfigError(str(exc), path) from exc


def _positive_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
        raise ConfigError(f"{path} must be a positive integer, got {value!r}", path)
    return int(value)


@dataclass
class ExperimentConfig:
    demand: dict
    cost: dict
    policy: dict
    horizon: int
    replications: int
    seed: int
    record: list[int] | None = None  # None means the logarithmic grid
    good_event: dict | None = None  # {"alpha": ..., "beta": ...} in C'' units

    @classmethod
    def from_mapping(cls, m: Mapping) -> "ExperimentConfig":
        if not isinstance(m, Mapping):
            raise ConfigError("configuration must be a JSON object")
        known = {"demand", "cost", "policy", "horizon", "replications", "seed", "record", "good_event"}
        extra = set(m) - known
        if extra:
            key = sorted(extra)[0]
            raise ConfigError(f"unknown configuration key {key!r}", key)
        for key in ("demand", "cost", "policy", "horizon", "replications", "seed"):
            if key not in m:
                raise ConfigError(f"missing required key {key!r}", None)
        horizon = _positive_int(m["horizon"], "horizon")
        reps = _positive_int(m["replications"], "replications")
        try:
            seed = check_seed(m["seed"])
        except ValueError as exc:
            raise ConfigError(str(exc), "seed") from exc
        record = m.get("record")
        if record in (None, "log"):
            record = None
        else:
            if not isinstance(record, Sequence) or isinstance(record, str) or not record:
                raise ConfigError("record must be \"log\" or a nonempty list of periods", "record")
            for t in record:
                _positive_int(t, "record")
                if t > horizon:
                    raise ConfigError(f"record period {t} exceeds horizon {horizon}", "record")
            record = sorted(set(int(t) for t in record))
        good = m.get("good_event")
        if good is not None:
            if not isinstance(good, Mapping) or set(good) != {"alpha", "beta"}:
                raise ConfigError("good_event must be {\"alpha\": ..., \"beta\": ...}", "good_event")
            for k in ("alpha", "beta"):
                if isinstance(good[k], bool) or not isinstance(good[k], (int, float)) or good[k] <= 0:
                    raise ConfigError(f"good_event.{k} must be a positive number", f"good_event.{k}")
            good = {"alpha": float(good["alpha"]), "beta": float(good["beta"])}
        cfg = cls(
            demand=dict(m["demand"]) if isinstance(m["demand"], Mapping) else m["demand"],
            cost=dict(m["cost"]) if isinstance(m["cost"], Mapping) else m["cost"],
            policy=dict(m["policy"]) if isinstance(m["policy"], Mapping) else m["policy"],
            horizon=horizon,
            replications=reps,
            seed=seed,
            record=record,
            good_event=good,
        )
        cfg.build()  # surfaces model-parameter errors at load time
        return cfg

    def to_mapping(self) -> dict:
        out = {
            "demand": dict(self.demand),
            "cost": dict(self.cost),
            "policy": dict(self.policy),
            "horizon": self.horizon,
            "replications": self.replications,
            "seed": self.seed,
            "record": "log" if self.record is None else list(self.record),
        }
        if self.good_event is not None:
            out["good_event"] = dict(self.good_event)
        return out

    def build(self) -> "Instance":
        demand = _build("demand", self.demand, demand_from_config)
        cost = _build("cost", self.cost, cost_from_config)
        policy = _build("policy", self.policy, policy_from_config, cost, demand)
        return Instance(demand, cost, policy, self.good_event_threshold(demand, cost))

    def grid(self) -> np.ndarray:
        if self.record is None:
            return log_grid(self.horizon)
        return np.asarray(self.record, dtype=np.int64)

    def good_event_threshold(self, demand: DemandModel, cost: CostModel) -> float | None:
        """``alpha * beta`` for the event ``|g(x_t)| <= alpha beta``.

        Defaults to the local-flat family's own curvature ``(h + b) alpha``
        and width ``beta`` when the cost is linear.
        """
        if self.good_event is not None:
            return self.good_event["alpha"] * self.good_event["beta"]
        if isinstance(demand, LocalFlatDemand) and isinstance(cost, LinearCost):
            return (cost.h + cost.b) * demand.alpha * demand.beta
        return None


@dataclass
class Instance:
    demand: DemandModel
    cost: CostModel
    policy: Policy
    good_event_threshold: float | None
    x_star: float = field(init=False)
    c_star: float = field(init=False)

    def __post_init__(self):
        self.x_star = optimal_quantity(self.cost, self.demand)
        self.c_star = float(self.cost.expected_cost(self.x_star, self.demand))


# ---------------------------------------------------------------------------
# trace


def _mean_se(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = mat.mean(axis=0)
    if mat.shape[0] < 2:
        return mean, np.full(mean.shape, np.nan)
    return mean, mat.std(axis=0, ddof=1) / math.sqrt(mat.shape[0])


@dataclass
class RegretTrace:
    """Per-replication regret statistics on the recording grid.

    ``inst``, ``cum`` and ``g_abs`` have shape ``(replications, len(t))``:
    instantaneous regret, cumulative regret and ``|g(x_t)|`` at each recorded
    period.
    """

    t: np.ndarray
    inst: np.ndarray
    cum: np.ndarray
    g_abs: np.ndarray
    good_event_threshold: float | None = None

    @property
    def replications(self) -> int:
        return self.inst.shape[0]

    @property
    def mean_inst_regret(self):
        return _mean_se(self.inst)[0]

    @property
    def se(self):
        return _mean_se(self.inst)[1]

    @property
    def cum_regret(self):
        return _mean_se(self.cum)[0]

    @property
    def cum_se(self):
        return _mean_se(self.cum)[1]

    @property
    def mean_g_sq(self):
        return _mean_se(self.g_abs**2)[0]

    @property
    def g_sq_se(self):
        return _mean_se(self.g_abs**2)[1]

    def good_event(self) -> np.ndarray | None:
        if self.good_event_threshold is None:
            return None
        return self.g_abs <= self.good_event_threshold

    @property
    def good_event_freq(self):
        ev = self.good_event()
        if ev is None:
            return np.full(self.t.shape, np.nan)
        return ev.mean(axis=0)

    def decomposition(self):
        """Mean regret split on the good event: ``(I1, I2)`` per recorded period."""
        ev = self.good_event()
        if ev is None:
            raise ValueError("no good-event threshold recorded")
        return (self.inst * ev).mean(axis=0), (self.inst * ~ev).mean(axis=0)

    def at(self, t: int) -> int:
        idx = np.flatnonzero(self.t == t)
        if idx.size == 0:
            raise KeyError(f"period {t} was not recorded")
        return int(idx[0])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        cols = [
            self.t,
            self.mean_inst_regret,
            self.se,
            self.cum_regret,
            self.good_event_freq,
            self.mean_g_sq,
        ]
        for row in zip(*cols):
            t, rest = row[0], row[1:]
            buf.write(str(int(t)) + "," + ",".join(repr(float(v)) for v in rest) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def summary(self) -> dict:
        last = -1
        out = {
            "horizon": int(self.t[last]),
            "replications": self.replications,
            "cum_regret": float(self.cum_regret[last]),
            "cum_se": _finite(self.cum_se[last]),
            "mean_inst_regret": float(self.mean_inst_regret[last]),
        }
        try:
            out["fit"] = fit_log_t(self.t, self.cum_regret).to_dict()
        except InsufficientGridError:
            out["fit"] = None
        return out


def _finite(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


# ---------------------------------------------------------------------------
# engine


def simulate_replication(config: ExperimentConfig, inst: Instance, index: int, grid: np.ndarray):
    """One replication: ``(inst_regret, cum_regret, |g|)`` at the recorded periods."""
    rng = replication_rng(config.seed, index)
    demands = inst.demand.sample(rng, config.horizon)
    x = inst.policy.path(demands)
    regret = np.maximum(inst.cost.expected_cost(x, inst.demand) - inst.c_star, 0.0)
    cum = np.cumsum(regret)
    idx = grid - 1
    g = np.abs(inst.cost.expected_gradient(x[idx], inst.demand))
    return regret[idx], cum[idx], g


def _run_chunk(args):
    mapping, start, stop = args
    config = ExperimentConfig.from_mapping(mapping)
    inst = config.build()
    grid = config.grid()
    rows = [simulate_replication(config, inst, k, grid) for k in range(start, stop)]
    return [np.stack(col) for col in zip(*rows)]


def default_workers() -> int:
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig | Mapping, workers: int = 1) -> RegretTrace:
    """Run all replications and aggregate them into a :class:`RegretTrace`.

    Replication ``k`` uses the stream keyed by ``(seed, k)`` and results are
    stacked in replication order, so ``workers`` never changes the output.
    """
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_mapping(config)
    inst = config.build()
    grid = config.grid()
    reps = config.replications
    workers = max(1, min(int(workers), reps))
    if workers == 1:
        rows = [simulate_replication(config, inst, k, grid) for k in range(reps)]
        mats = [np.stack(col) for col in zip(*rows)]
    else:
        bounds = np.linspace(0, reps, workers + 1).astype(int)
        jobs = [(config.to_mapping(), int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_chunk, jobs))
        mats = [np.concatenate([p[i] for p in parts]) for i in range(3)]
    return RegretTrace(grid, mats[0], mats[1], mats[2], inst.good_event_threshold)


# ---------------------------------------------------------------------------
# scaling fits


@dataclass
class LogFit:
    slope: float
    intercept: float
    r2: float
    n: int
    t_min: float

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "n": self.n, "t_min": self.t_min}


def ols(x, y) -> tuple[float, float, float]:
    """Least-squares line ``y = slope x + intercept``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


def fit_log_t(t, cum_regret, t_min: float = FIT_T_MIN, t_max: float | None = None) -> LogFit:
    """Regress cumulative regret on ``ln t`` over ``t_min <= t <= t_max``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(cum_regret, dtype=float)
    mask = t >= t_min
    if t_max is not None:
        mask &= t <= t_max
    if mask.sum() < 4:
        raise InsufficientGridError(f"need >= 4 recorded periods in the fit range, got {int(mask.sum())}")
    slope, intercept, r2 = ols(np.log(t[mask]), y[mask])
    return LogFit(slope, intercept, r2, int(mask.sum()), float(t_min))


@dataclass
class ScalingReport:
    axis: str
    values: list[float]
    fits: list[LogFit]
    slope_ratios: list[float] | None = None
    inverse_ratios: list[float] | None = None
    final_regret: list[float] | None = None
    final_se: list[float] | None = None

    @property
    def slopes(self) -> list[float]:
        return [f.slope for f in self.fits]

    @property
    def normalized_ratios(self) -> list[float] | None:
        if self.slope_ratios is None:
            return None
        return [s / i for s, i in zip(self.slope_ratios, self.inverse_ratios)]

    @property
    def slopes_decreasing(self) -> bool:
        s = self.slopes
        return all(a > b for a, b in zip(s[:-1], s[1:]))

    @property
    def max_relative_slope_gap(self) -> float:
        s = np.asarray(self.slopes)
        return float((s.max() - s.min()) / np.abs(s).max())

    def to_dict(self):
        out = {
            "axis": self.axis,
            "values": list(self.values),
            "fits": [f.to_dict() for f in self.fits],
            "slopes": self.slopes,
            "slopes_decreasing": self.slopes_decreasing,
            "max_relative_slope_gap": self.max_relative_slope_gap,
        }
        if self.slope_ratios is not None:
            out["slope_ratios"] = self.slope_ratios
            out["inverse_alpha_ratios"] = self.inverse_ratios
            out["normalized_ratios"] = self.normalized_ratios
        if self.final_regret is not None:
            out["final_regret"] = self.final_regret
            out["final_se"] = self.final_se
        return out


def fit_scaling(traces, axis: str = "T", t_min: float = FIT_T_MIN) -> ScalingReport:
    """Fit ``ln t`` slopes along one grid axis.

    ``axis="T"``: a single trace. ``axis="alpha"`` / ``"beta"``: a mapping
    from parameter value to trace. The alpha axis also reports slope ratios
    against ``1/alpha`` ratios relative to the first (smallest) alpha.
    """
    if axis == "T":
        if isinstance(traces, Mapping):
            if len(traces) != 1:
                raise InsufficientGridError("the T axis takes exactly one trace")
            traces = next(iter(traces.values()))
        fit = fit_log_t(traces.t, traces.cum_regret, t_min)
        return ScalingReport("T", [float(traces.t[-1])], [fit])
    if axis not in ("alpha", "beta"):
        raise ValueError(f"unknown axis {axis!r}")
    if not isinstance(traces, Mapping) or len(traces) < 2:
        raise InsufficientGridError(f"the {axis} axis needs traces for >= 2 parameter values")
    values = sorted(float(v) for v in traces)
    ordered = [traces[v] for v in sorted(traces)]
    fits = [fit_log_t(tr.t, tr.cum_regret, t_min) for tr in ordered]
    report = ScalingReport(
        axis,
        values,
        fits,
        final_regret=[float(tr.cum_regret[-1]) for tr in ordered],
        final_se=[_finite(tr.cum_se[-1]) for tr in ordered],
    )
    if axis == "alpha":
        base = fits[0].slope
        report.slope_ratios = [f.slope / base for f in fits]
        report.inverse_ratios = [values[0] / v for v in values]
    return report


# ---------------------------------------------------------------------------
# concentration of the true gradient at the SAA decision


def upper_bound_constants(B: float, C1: float, C0: float, d_bar: float) -> dict:
    """Constants ``K1..K4`` of the SAA regret upper bound for a given ``C0``.

    ``C0`` is a non-constructive universal constant; values computed here
    depend on whatever the caller plugs in and are not claimed to be tight.
    """
    a = 4 * C0 * B + C1
    k4 = a * a + 2 * B * B + math.sqrt(2 * math.pi) * B * a
    k1 = 2 * d_bar * math.sqrt(k4)
    k2 = 8 * math.sqrt(2) * d_bar * math.sqrt(k4) * a + 8 * d_bar * math.sqrt(k4) / a
    k3 = 2 * k4
    return {"K1": k1, "K2": k2, "K3": k3, "K4": k4}


def regret_upper_bound(T: int, alpha: float, beta: float, B: float, C1: float, C0: float, d_bar: float) -> float:
    k = upper_bound_constants(B, C1, C0, d_bar)
    return k["K1"] + k["K2"] / (alpha * beta) + k["K3"] * math.log(T) / alpha


def good_event_tail_bound(t, alpha: float, beta: float, B: float, C1: float, C0: float):
    """Bound on ``P[not B_t]``: 1 during the burn-in ``t <= 4 (4 C0 B + C1)^2 / (alpha beta)^2``."""
    t = np.asarray(t, dtype=float)
    burn = 4 * (4 * C0 * B + C1) ** 2 / (alpha * beta) ** 2
    return np.where(t <= burn, 1.0, np.exp(-(alpha * beta) ** 2 * t / 8))


@dataclass
class ConcentrationReport:
    rows: list[tuple[int, float, float, float]]  # (t, lambda, empirical tail, bound)
    decay: LogFit | None  # log E|g|^2 against log t

    def to_dict(self):
        return {
            "rows": [{"t": t, "lambda": lam, "empirical": e, "bound": b} for t, lam, e, b in self.rows],
            "decay": None if self.decay is None else self.decay.to_dict(),
        }


def gradient_decay_fit(trace: RegretTrace, t_min: float = 100, t_max: float = 10_000) -> LogFit:
    """Slope of ``log E|g(x_t)|^2`` against ``log t``; ``-1`` is the expected rate."""
    t = trace.t.astype(float)
    mask = (t >= t_min) & (t <= t_max)
    if mask.sum() < 4:
        raise InsufficientGridError(f"need >= 4 recorded periods in [{t_min}, {t_max}]")
    g2 = trace.mean_g_sq[mask]
    if np.any(g2 <= 0):
        raise InsufficientGridError("E|g|^2 vanishes inside the fit range; no decay to fit")
    slope, intercept, r2 = ols(np.log(t[mask]), np.log(g2))
    return LogFit(slope, intercept, r2, int(mask.sum()), float(t_min))


def concentration_report(
    trace: RegretTrace,
    B: float,
    C1: float,
    C0: float = 1.0,
    lambdas: Sequence[float] | None = None,
    t_range: tuple[float, float] = (100, 10_000),
) -> ConcentrationReport:
    """Empirical ``P[|g| >= lambda + (4 C0 B + C1)/sqrt(t)]`` against ``exp(-t lambda^2 / 2B^2)``."""
    if lambdas is None:
        lambdas = [B * f for f in (0.01, 0.05, 0.1, 0.25)]
    shift = 4 * C0 * B + C1
    rows = []
    for j, t in enumerate(trace.t):
        g = trace.g_abs[:, j]
        for lam in lambdas:
            thresh = lam + shift / math.sqrt(t)
            emp = float(np.mean(g >= thresh))
            bound = math.exp(-t * lam * lam / (2 * B * B))
            rows.append((int(t), float(lam), emp, bound))
    try:
        decay = gradient_decay_fit(trace, *t_range)
    except InsufficientGridError:
        decay = None
    return ConcentrationReport(rows, decay)

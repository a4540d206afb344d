"""Experiment configuration, paired SEMF/baseline runs, sweeps and result files."""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng as rngs
from .baselines import baseline_intervals, fit_baseline, run_baseline
from .conformal import conformalize
from .context import RunContext, build_context
from .data import load_csv
from .engine import GRID, RESIDUAL_MODELS, SemfConfig, train
from .errors import ConfigError, SemfError
from .inference import IntervalBatch, predict_interval
from .learners import FAMILIES
from .metrics import DELTA_KEYS, MetricReport, evaluate, improvement_deltas, select_best_config
from .simulation import SimSpec, generate

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("config_hash", "dataset", "family", "seed", "side", "picp", "mpiw", "nmpiw", "cwr", "crps",
                  "pinball", "d_cwr", "d_nmpiw", "d_crps", "d_pinball", "d_picp")
METRIC_COLUMNS = ("picp", "mpiw", "nmpiw", "cwr", "crps", "pinball")


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "sim"
    outcome: str = "y"
    sim: SimSpec = SimSpec()
    family: str = "boosted"
    semf: SemfConfig = SemfConfig()
    learner_params: tuple = ()
    alpha: float = 0.05
    seeds: tuple = (0, 10, 20, 30, 40)
    out: str = "results"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be non-empty and distinct")

    @property
    def dataset_name(self):
        return self.sim.name if self.dataset == "sim" else os.path.splitext(os.path.basename(self.dataset))[0]

    def load(self):
        return generate(self.sim) if self.dataset == "sim" else load_csv(self.dataset, self.outcome)

    def config_hash(self):
        """Digest of everything that affects results except the seed list and output path."""
        d = asdict(self)
        d.pop("seeds")
        d.pop("out")
        d["semf"].pop("seed")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


# --------------------------------------------------------------------------
# flat key = value config files

_SEMF_KEYS = {"R": int, "R_infer": int, "m_k": int, "sigma": "sigma", "patience": int, "max_steps": int,
              "batches": int, "sigma_min": float, "sigma_init": float}
_SIM_KEYS = {"signal": str, "noise": str, "n": int, "k": int, "data_seed": int, "noise_scale": float}
_TOP_KEYS = {"dataset": str, "outcome": str, "family": str, "alpha": float, "seeds": "ints", "out": str}


def _coerce(kind, key, raw):
    try:
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "sigma":
            return RESIDUAL_MODELS if raw in (RESIDUAL_MODELS, "train_residual_models") else float(raw)
        if kind == "auto":
            for cast in (int, float):
                try:
                    return cast(raw)
                except ValueError:
                    pass
            return raw
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text, overrides=None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` comments) into a :class:`RunConfig`.

    ``learner.<name>`` keys pass hyper-parameters to the learner family.
    """
    top, sim, semf, learner = {}, {}, {}, {}
    items = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (p.strip() for p in line.split("=", 1))
        items.append((key, raw))
    items += list((overrides or {}).items())
    for key, raw in items:
        raw = str(raw)
        if key.startswith("learner."):
            learner[key[len("learner."):]] = _coerce("auto", key, raw)
        elif key in _TOP_KEYS:
            top[key] = _coerce(_TOP_KEYS[key], key, raw)
        elif key in _SIM_KEYS:
            sim[key] = _coerce(_SIM_KEYS[key], key, raw)
        elif key in _SEMF_KEYS:
            semf[key] = _coerce(_SEMF_KEYS[key], key, raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "data_seed" in sim:
        sim["seed"] = sim.pop("data_seed")
    if "batches" in semf:
        semf["n_batches"] = semf.pop("batches")
    return RunConfig(sim=SimSpec(**sim), semf=SemfConfig(**semf), learner_params=tuple(sorted(learner.items())),
                     **top)


def load_config(path, overrides=None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config_text(fh.read(), overrides)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


# --------------------------------------------------------------------------
# one seed


def semf_config_for(config: RunConfig, seed: int) -> SemfConfig:
    return replace(config.semf, seed=seed)


def semf_intervals(model, ctx: RunContext, segment) -> IntervalBatch:
    """Raw SEMF intervals for a segment in standardized units.

    Each row's random stream is keyed by (seed, row index in the dataset).
    """
    idx = ctx.rows(segment)
    return predict_interval(model, ctx.dataset.sources(idx), ctx.alpha, seed=rngs.derive_seed(ctx.seed, rngs.INFER),
                            rows=idx, keep_samples=False)


def run_semf(config: RunConfig, ctx: RunContext):
    """Train, conformalize on the calibration segment, score on test."""
    model = train(semf_config_for(config, ctx.seed), ctx.dataset, config.family, dict(config.learner_params))
    cal = semf_intervals(model, ctx, ctx.calibration_segment)
    test = semf_intervals(model, ctx, "test")
    _, lo, hi = conformalize(cal.lower, cal.upper, ctx.outcome(ctx.calibration_segment, "scaled"),
                             test.lower, test.upper, ctx.alpha)
    out = IntervalBatch(lower=lo, upper=hi, point=test.point, alpha=ctx.alpha).to_outcome_units(ctx.scaler)
    report = evaluate(ctx.outcome("test"), out.lower, out.upper, ctx.alpha, ctx.y_range)
    return model, out, report


@dataclass
class SeedResult:
    seed: int
    semf: MetricReport | None = None
    baseline: MetricReport | None = None
    error: str | None = None
    split_digest: str = ""

    @property
    def ok(self):
        return self.error is None


def _split_digest(ctx):
    h = hashlib.sha256()
    for seg in ("train", "early_stop", "valid", "test"):
        h.update(np.asarray(ctx.rows(seg), dtype=np.int64).tobytes())
    h.update(np.asarray([ctx.scaler.outcome_mean, ctx.scaler.outcome_std], dtype=float).tobytes())
    return h.hexdigest()[:12]


def run_seed(config: RunConfig, seed: int, raw=None) -> SeedResult:
    raw = config.load() if raw is None else raw
    ctx = build_context(raw, seed, config.alpha)
    _, _, semf_report = run_semf(config, ctx)
    _, base_report = run_baseline(config.family, ctx, learner_params=dict(config.learner_params))
    semf_report.deltas = improvement_deltas(semf_report, base_report)
    return SeedResult(seed=seed, semf=semf_report, baseline=base_report, split_digest=_split_digest(ctx))


# --------------------------------------------------------------------------
# results


def _fmt(v):
    return "" if v is None else repr(float(v))


def result_rows(config: RunConfig, res: SeedResult):
    rows = []
    for side, rep in (("semf", res.semf), ("baseline", res.baseline)):
        row = {"config_hash": config.config_hash(), "dataset": config.dataset_name, "family": config.family,
               "seed": str(res.seed), "side": side}
        for c in METRIC_COLUMNS:
            row[c] = _fmt(getattr(rep, c))
        for k in DELTA_KEYS:
            row["d_" + k] = _fmt(rep.deltas[k]) if side == "semf" else ""
        rows.append(row)
    return rows


def append_rows(path, rows, columns=RESULT_COLUMNS):
    """Append complete rows in one write, adding a header to a new file."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    if new:
        writer.writeheader()
    writer.writerows(rows)
    with open(path, "a", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
        fh.flush()
        os.fsync(fh.fileno())


def aggregate(values):
    v = np.asarray(values, dtype=float)
    return {"mean": float(v.mean()), "min": float(v.min()), "max": float(v.max()),
            "std": float(v.std(ddof=1)) if v.size > 1 else 0.0}


@dataclass
class RunRecord:
    config_hash: str
    config: RunConfig
    seeds: list = field(default_factory=list)

    @property
    def completed(self):
        return [s for s in self.seeds if s.ok]

    @property
    def partial(self):
        return len(self.completed) != len(self.seeds)

    def aggregates(self):
        """``{(side, metric): {"mean","min","max","std"}}`` over completed seeds,
        with deltas under side ``"delta"``."""
        done = self.completed
        out = {}
        if not done:
            return out
        for side in ("semf", "baseline"):
            for c in METRIC_COLUMNS:
                out[(side, c)] = aggregate([getattr(getattr(s, side), c) for s in done])
        for k in DELTA_KEYS:
            out[("delta", k)] = aggregate([s.semf.deltas[k] for s in done])
        return out


def write_summary(path, record: RunRecord):
    rows = []
    for (side, metric), stats in record.aggregates().items():
        rows.append({"config_hash": record.config_hash, "dataset": record.config.dataset_name,
                     "family": record.config.family, "side": side, "metric": metric,
                     "n_seeds": str(len(record.completed)), **{k: _fmt(v) for k, v in stats.items()}})
    cols = ("config_hash", "dataset", "family", "side", "metric", "n_seeds", "mean", "min", "max", "std")
    append_rows(path, rows, cols)


def run_experiment(config: RunConfig, out_dir=None, write=True) -> RunRecord:
    """Run every seed, appending each finished seed's rows to ``results.csv``.

    A failing seed is logged and recorded; the remaining seeds still run.
    """
    out_dir = config.out if out_dir is None else out_dir
    record = RunRecord(config.config_hash(), config)
    raw = config.load()
    if write:
        os.makedirs(out_dir, exist_ok=True)
    for seed in config.seeds:
        try:
            res = run_seed(config, seed, raw)
        except (SemfError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            log.error("seed %s failed: %s", seed, exc)
            record.seeds.append(SeedResult(seed=seed, error=f"{type(exc).__name__}: {exc}"))
            continue
        record.seeds.append(res)
        if write:
            append_rows(os.path.join(out_dir, "results.csv"), result_rows(config, res))
    if write:
        write_summary(os.path.join(out_dir, "summary.csv"), record)
        meta = {"config_hash": record.config_hash, "config": asdict(config), "calibration_segment": "valid",
                "failed_seeds": {str(s.seed): s.error for s in record.seeds if not s.ok},
                "split_digests": {str(s.seed): s.split_digest for s in record.seeds if s.ok}}
        with open(os.path.join(out_dir, f"run_{record.config_hash}.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    return record


# --------------------------------------------------------------------------
# hyper-parameter sweep


def grid_configs(grid=None):
    grid = GRID if grid is None else grid
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(config: RunConfig, grid=None, budget=500, seed=0, out_dir=None):
    """Random search over ``grid`` scored on raw validation intervals.

    Configurations are drawn uniformly without replacement (all of them when
    ``budget`` covers the grid).  The SEMF and baseline intervals on the
    validation segment are compared before any conformal correction, and
    :func:`select_best_config` picks the winner.  Returns
    ``(best, picp_floor_used, candidates)``.
    """
    combos = grid_configs(grid)
    if not combos:
        raise ConfigError("empty hyper-parameter grid")
    order = rngs.stream(seed, rngs.SWEEP).permutation(len(combos))[:budget]
    run_seed_ = config.seeds[0]
    ctx = build_context(config.load(), run_seed_, config.alpha)
    y_val = ctx.outcome("valid")
    base = fit_baseline(config.family, ctx, learner_params=dict(config.learner_params))
    b = baseline_intervals(base, ctx, "valid").to_outcome_units(ctx.scaler)
    base_rep = evaluate(y_val, b.lower, b.upper, ctx.alpha, ctx.y_range)
    candidates = []
    for i in order:
        params = combos[int(i)]
        cfg = replace(config.semf, seed=run_seed_, **params)
        try:
            model = train(cfg, ctx.dataset, config.family, dict(config.learner_params))
        except SemfError as exc:
            log.warning("sweep candidate %s failed: %s", params, exc)
            continue
        s = semf_intervals(model, ctx, "valid").to_outcome_units(ctx.scaler)
        rep = evaluate(y_val, s.lower, s.upper, ctx.alpha, ctx.y_range)
        d = improvement_deltas(rep, base_rep)
        candidates.append({**params, **{"d_" + k: v for k, v in d.items()}, "picp": rep.picp, "cwr": rep.cwr})
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        cols = sorted(combos[0]) + ["picp", "cwr"] + ["d_" + k for k in DELTA_KEYS]
        path = os.path.join(out_dir, "sweep.csv")
        if os.path.exists(path):
            os.remove(path)
        append_rows(path, [{k: (repr(v) if isinstance(v, float) else str(v)) for k, v in c.items()}
                           for c in candidates], cols)
    best, floor = select_best_config(candidates)
    return best, floor, candidates

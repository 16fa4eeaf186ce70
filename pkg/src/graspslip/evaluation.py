"""Metrics and experiment running: success rate, ahead-drop rate,
cross-condition matrices, and multi-seed comparison tables.

Success rate is micro-averaged at step granularity (every evaluated step
counts once); window-level macro averaging is available via ``average``.
The ahead-drop denominator is failure sets only, and "ahead" is strict:
a first unstable prediction exactly at the drop step does not count.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from graspslip import data as gdata
from graspslip import models as gmodels
from graspslip.ioutil import atomic_write_text
from graspslip.signal import compute_norm_stats


def _as_flags(x, name: str) -> np.ndarray:
    a = np.asarray(x)
    if a.size == 0:
        raise ValueError(f"empty input: {name}")
    return a.astype(bool).ravel()


def success_rate(predictions, labels) -> float:
    """Fraction of steps where the predicted flag equals the reference.

    Both arguments must use the same convention (both stable-flags or
    both unstable-flags); only equality is measured.
    """
    p = _as_flags(predictions, "predictions")
    y = _as_flags(labels, "labels")
    if p.size != y.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {y.size} labels")
    return float(np.mean(p == y))


def confusion_counts(pred_unstable, label_unstable) -> dict[str, int]:
    """tp/fp/tn/fn with "unstable" as the positive class."""
    p = _as_flags(pred_unstable, "predictions")
    y = _as_flags(label_unstable, "labels")
    if p.size != y.size:
        raise ValueError(f"length mismatch: {p.size} predictions vs {y.size} labels")
    return {
        "tp": int(np.sum(p & y)),
        "fp": int(np.sum(p & ~y)),
        "tn": int(np.sum(~p & ~y)),
        "fn": int(np.sum(~p & y)),
    }


def first_unstable(flags) -> int | None:
    """Index of the first True in a per-step unstable stream, if any."""
    f = np.asarray(flags).astype(bool).ravel()
    hits = np.nonzero(f)[0]
    return int(hits[0]) if hits.size else None


def ahead_drop_rate(first_unstable_steps, drop_steps) -> float:
    """Fraction of failure sets predicted unstable strictly before the drop.

    first_unstable_steps may contain None (never predicted unstable),
    which counts as not-ahead. An empty input is an error, never 0.
    """
    firsts = list(first_unstable_steps)
    drops = list(drop_steps)
    if len(firsts) != len(drops):
        raise ValueError(f"length mismatch: {len(firsts)} vs {len(drops)}")
    if not firsts:
        raise ValueError("undefined metric: no failure sets")
    ahead = sum(
        1 for f, d in zip(firsts, drops) if f is not None and f < d
    )
    return ahead / len(firsts)


@dataclass
class EvalReport:
    """One evaluation pass over a set collection."""

    success_rate: float
    ahead_drop_rate: float | None
    confusion: dict
    n_windows: int
    n_steps: int
    n_failure_sets: int
    window_success_rate: float | None = None
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.success_rate <= 1.0):
            raise ValueError("success_rate out of [0, 1]")
        if self.ahead_drop_rate is not None and not (0.0 <= self.ahead_drop_rate <= 1.0):
            raise ValueError("ahead_drop_rate out of [0, 1]")
        total = sum(self.confusion.get(k, 0) for k in ("tp", "fp", "tn", "fn"))
        if total != self.n_steps:
            raise ValueError("confusion counts inconsistent with n_steps")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def _set_drop_step(grasp: gdata.GraspSet, channel: int) -> int | None:
    """Ground-truth drop when the generator recorded one, else detected."""
    if "drop_step" in grasp.meta:
        return int(grasp.meta["drop_step"])
    return gdata.detect_drop(grasp.channel(channel))


def evaluate_model(
    model,
    sets,
    window_len: int = 160,
    channel: int = 0,
    labels: str = "detect",
    average: str = "step",
) -> EvalReport:
    """Per-step evaluation of a zoo model over one channel of each set.

    Success rate pools all windowed steps; the ahead-drop pass stitches
    each set's windows back into a timeline and compares the first
    unstable prediction against the set's drop step.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("empty input: no sets")
    if average not in ("step", "window"):
        raise ValueError(f"average must be step|window, got {average!r}")

    all_pred, all_ref = [], []
    window_rates = []
    firsts, drops = [], []
    by_direction: dict[str, list] = {}

    for grasp in sets:
        windows = gdata.window_batches(grasp, window_len, channel, labels=labels)
        set_pred = []
        for w in windows:
            pred = model.predict(model.featurize(w.samples))
            all_pred.append(pred.unstable)
            all_ref.append(w.unstable)
            window_rates.append(float(np.mean(pred.unstable == w.unstable)))
            set_pred.append(pred.unstable)
            by_direction.setdefault(grasp.direction, []).append(
                float(np.mean(pred.unstable == w.unstable))
            )
        if grasp.outcome == "failure":
            drop = _set_drop_step(grasp, channel)
            if drop is not None:
                firsts.append(first_unstable(np.concatenate(set_pred)))
                drops.append(drop)

    pred = np.concatenate(all_pred)
    ref = np.concatenate(all_ref)
    adr = ahead_drop_rate(firsts, drops) if firsts else None
    return EvalReport(
        success_rate=success_rate(pred, ref),
        ahead_drop_rate=adr,
        confusion=confusion_counts(pred, ref),
        n_windows=len(window_rates),
        n_steps=int(pred.size),
        n_failure_sets=len(firsts),
        window_success_rate=float(np.mean(window_rates)),
        breakdown={
            d: float(np.mean(v)) for d, v in sorted(by_direction.items())
        },
    )


def evaluate_baseline(
    baseline,
    feature_model,
    sets,
    window_len: int = 160,
    channel: int = 0,
    labels: str = "detect",
) -> dict:
    """Window-level evaluation for the classical models.

    Baselines see one flattened feature vector per window and one label:
    the window's final step (the state the grasp ends the window in).
    """
    from graspslip.baselines import flatten_window

    sets = list(sets)
    if not sets:
        raise ValueError("empty input: no sets")
    hits = total = 0
    for grasp in sets:
        for w in gdata.window_batches(grasp, window_len, channel, labels=labels):
            vec = flatten_window(feature_model.featurize(w.samples))
            pred, _ = baseline.predict(vec)
            ref = int(w.unstable[-1])
            hits += int(pred == ref)
            total += 1
    return {"success_rate": hits / total, "n_windows": total}


# -- cross-condition matrix ----------------------------------------------


def cross_condition_matrix(
    sets,
    variant,
    config: gmodels.TrainConfig,
    condition: str = "direction",
    ratio: float = 0.8,
    labels: str = "detect",
    channel: int = 0,
) -> dict:
    """Train per row condition, evaluate on every column's held-out part.

    Cells hold step-level success rates; conditions with no train or test
    data yield "n/a" and the run continues.
    """
    sets = list(sets)
    if condition == "direction":
        key = lambda s: s.direction
    elif condition == "outcome":
        key = lambda s: s.outcome
    else:
        raise ValueError(f"condition must be direction|outcome, got {condition!r}")

    groups: dict[str, list] = {}
    for s in sets:
        groups.setdefault(key(s), []).append(s)
    names = sorted(groups)

    # Per-condition split so the diagonal is never train-on-train.
    splits = {}
    for name in names:
        try:
            splits[name] = gdata.split(groups[name], ratio, seed=config.seed)
        except ValueError:
            splits[name] = (groups[name], [])

    cells: dict[str, dict[str, object]] = {}
    for row in names:
        train_sets = splits[row][0]
        row_cells: dict[str, object] = {}
        try:
            model, _ = fit_variant(variant, train_sets, config, labels=labels, channel=channel)
        except ValueError as exc:
            for col in names:
                row_cells[col] = f"error: {exc}"
            cells[row] = row_cells
            continue
        for col in names:
            test_sets = splits[col][1]
            if not test_sets:
                row_cells[col] = "n/a"
                continue
            report = evaluate_model(
                model, test_sets, config.window_len, channel, labels=labels
            )
            row_cells[col] = report.success_rate
        cells[row] = row_cells
    return {"condition": condition, "rows": names, "cols": names, "cells": cells}


# -- experiment runner -----------------------------------------------------


def fit_variant(
    variant,
    train_sets,
    config: gmodels.TrainConfig,
    val_sets=None,
    labels: str = "detect",
    channel: int = 0,
):
    """Stats from the train split, windows from one channel, then train."""
    variant = variant if isinstance(variant, gmodels.ModelVariant) else gmodels.get_variant(variant)
    train_sets = list(train_sets)
    if not train_sets:
        raise ValueError("empty input: no training sets")
    windows = []
    for grasp in train_sets:
        windows.extend(gdata.window_batches(grasp, config.window_len, channel, labels=labels))
    stats = compute_norm_stats([w.samples for w in windows])
    model = gmodels.GraspModel.build(variant, config)
    model.stats = stats
    val_windows = None
    if val_sets:
        val_windows = []
        for grasp in val_sets:
            val_windows.extend(
                gdata.window_batches(grasp, config.window_len, channel, labels=labels)
            )
    history = gmodels.train(model, windows, config, val_windows=val_windows)
    return model, history


def _run_cell(args):
    variant_tag, seed, train_sets, test_sets, config_kwargs, labels, channel = args
    config = gmodels.TrainConfig(**dict(config_kwargs, seed=seed))
    try:
        model, history = fit_variant(
            variant_tag, train_sets, config, labels=labels, channel=channel
        )
        report = evaluate_model(
            model, test_sets, config.window_len, channel, labels=labels
        )
        return {
            "variant": variant_tag,
            "seed": seed,
            "ok": True,
            "success_rate": report.success_rate,
            "ahead_drop_rate": report.ahead_drop_rate,
            "window_success_rate": report.window_success_rate,
            "n_windows": report.n_windows,
            "epochs_run": len(history),
        }
    except (ValueError, RuntimeError) as exc:
        return {"variant": variant_tag, "seed": seed, "ok": False, "error": str(exc)}


def run_experiment(
    sets,
    variants=("A", "B", "C", "D"),
    seeds=(0,),
    out_dir=None,
    config: gmodels.TrainConfig | None = None,
    ratio: float = 0.8,
    labels: str = "detect",
    channel: int = 0,
    jobs: int = 1,
) -> dict:
    """Variant x seed sweep on a shared split; per-seed rows plus means.

    Every seed re-splits the data (seeded); all variants in one seed share
    that split so their comparison is paired. Failed cells carry their
    error message and do not abort the sweep. With jobs > 1 cells run in
    separate processes; results are deterministic either way.
    """
    sets = list(sets)
    config = config or gmodels.TrainConfig()
    variant_tags = [gmodels.get_variant(v).tag for v in variants]
    base_kwargs = {
        k: getattr(config, k)
        for k in (
            "window_len", "lstm_units", "lr", "epochs", "clip_norm",
            "loss_mode", "init_mode", "stft_window", "band_count",
            "threshold", "early_stop_patience",
        )
    }

    tasks = []
    for seed in seeds:
        train_sets, test_sets = gdata.split(sets, ratio, seed=seed)
        for tag in variant_tags:
            tasks.append((tag, seed, train_sets, test_sets, base_kwargs, labels, channel))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, tasks))
    else:
        rows = [_run_cell(t) for t in tasks]

    aggregates = []
    for tag in variant_tags:
        cells = [r for r in rows if r["variant"] == tag and r.get("ok")]
        failures = [r for r in rows if r["variant"] == tag and not r.get("ok")]
        agg = {"variant": tag, "n_ok": len(cells), "n_failed": len(failures)}
        if cells:
            agg["success_rate"] = float(np.mean([c["success_rate"] for c in cells]))
            adrs = [c["ahead_drop_rate"] for c in cells if c["ahead_drop_rate"] is not None]
            agg["ahead_drop_rate"] = float(np.mean(adrs)) if adrs else None
        aggregates.append(agg)

    result = {
        "split": "shared-per-seed",
        "ratio": ratio,
        "seeds": list(seeds),
        "labels": labels,
        "channel": channel,
        "rows": rows,
        "aggregate": aggregates,
    }
    if out_dir is not None:
        write_experiment_files(result, out_dir)
    return result


_CSV_COLUMNS = (
    "variant", "seed", "ok", "success_rate", "ahead_drop_rate",
    "window_success_rate", "n_windows", "epochs_run", "error",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_experiment_files(result: dict, out_dir) -> None:
    """experiment.csv (per-cell), experiment.txt (aligned), report.json."""
    os.makedirs(out_dir, exist_ok=True)
    lines = [",".join(_CSV_COLUMNS)]
    for row in result["rows"]:
        lines.append(",".join(_fmt(row.get(c)) for c in _CSV_COLUMNS))
    atomic_write_text(os.path.join(out_dir, "experiment.csv"), "\n".join(lines) + "\n")

    names = {"A": "lstm", "B": "stft-lstm", "C": "data-stft-lstm", "D": "lstm-stft-lstm"}
    txt = ["variant              success    ahead-drop   cells"]
    for agg in result["aggregate"]:
        name = names.get(agg["variant"], agg["variant"])
        sr = f"{agg['success_rate']:.4f}" if "success_rate" in agg else "n/a"
        adr = agg.get("ahead_drop_rate")
        adr = f"{adr:.4f}" if adr is not None else "n/a"
        txt.append(
            f"{agg['variant']} {name:<18} {sr:>7}    {adr:>7}   "
            f"{agg['n_ok']} ok / {agg['n_failed']} failed"
        )
    atomic_write_text(os.path.join(out_dir, "experiment.txt"), "\n".join(txt) + "\n")
    atomic_write_text(
        os.path.join(out_dir, "report.json"),
        json.dumps(result, indent=2, sort_keys=True) + "\n",
    )


def write_prediction_dump(model, grasp, path, window_len: int = 160, channel: int = 0,
                          labels: str = "detect") -> None:
    """Per-step plot data: step, force_mn, label, p_unstable, predicted."""
    rows = ["step,force_mn,label_unstable,p_unstable,predicted_unstable"]
    for w in gdata.window_batches(grasp, window_len, channel, labels=labels):
        pred = model.predict(model.featurize(w.samples))
        start = int(w.provenance.get("start", 0))
        for i in range(len(w)):
            rows.append(
                f"{start + i},{w.samples[i]:g},{int(w.unstable[i])},"
                f"{pred.p_unstable[i]:.9f},{int(pred.unstable[i])}"
            )
    atomic_write_text(path, "\n".join(rows) + "\n")

"""Dataset ingestion, labeling, windowing, splitting, and synthesis.

Trace file grammar (one grasp set per file, whitespace-separated):

    graspslip-trace v1
    kind force
    freq_hz 16.7
    channels 16
    outcome failure
    direction back
    object 3
    weight 1
    force_level 2
    slip_onset 192        # optional ground truth (synthetic sets)
    drop_step 255         # optional ground truth
    data
    1250 1190 ... 1303    # one row per time step, integer mN
    ...

Pressure runs use ``kind pressure`` with ``channels 4`` and an
``initial`` header of the four zero-position counts instead of the
grasp provenance keys. All values are integers; parsing is strict and
errors carry file and line.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from graspslip.ioutil import atomic_write_text, rng_for
from graspslip.signal import SensorTrace

TRACE_FORMAT = "graspslip-trace v1"
DIRECTIONS = ("back", "right", "top")

FORCE_CHANNELS = 16
PRESSURE_CHANNELS = 4

# Drop detection: scan is armed at the first sample >= ARM_MN (the lift
# proxy; the dataset has no explicit lift-onset marker), then the drop is
# the first step with DROP_SUSTAIN consecutive samples below EPS_DROP_MN.
EPS_DROP_MN = 50.0
ARM_MN = 200.0
DROP_SUSTAIN = 3

# Pre-drop labeling horizon: the window of steps before a detected drop
# that is labeled unstable.
LABEL_LEAD_STEPS = 20

PRESSURE_MARGIN = 200.0


@dataclass(frozen=True, eq=False)
class GraspSet:
    """One grasp attempt: 16 equal-length force traces plus provenance."""

    traces: tuple
    outcome: str
    object_id: int
    direction: str
    weight: int = 0
    force_level: int = 0
    set_id: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        traces = tuple(self.traces)
        if len(traces) != FORCE_CHANNELS:
            raise ValueError(f"expected {FORCE_CHANNELS} channels, got {len(traces)}")
        n = len(traces[0])
        if any(len(t) != n for t in traces):
            raise ValueError("length mismatch across channels")
        if self.outcome not in ("success", "failure"):
            raise ValueError(f"outcome must be success|failure, got {self.outcome!r}")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def n_steps(self) -> int:
        return len(self.traces[0])

    @property
    def freq_hz(self) -> float:
        return self.traces[0].freq_hz

    def channel(self, idx: int) -> SensorTrace:
        return self.traces[idx]

    def as_matrix(self) -> np.ndarray:
        """(n_steps, 16) sample matrix."""
        return np.stack([t.samples for t in self.traces], axis=1)


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """A fixed-length slice of one channel with per-step stability labels.

    ``labels`` holds stable=True booleans. ``drop_step`` is the index of
    the detected drop relative to the window start when the drop falls
    inside this window and the 20-step pre-drop rule produced the labels;
    it is None for ground-truth-labeled synthetic windows, where the
    unstable span comes straight from the generator.
    """

    samples: np.ndarray
    labels: np.ndarray
    drop_step: int | None = None
    channel_id: int = 0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=bool)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("empty input")
        if labels.shape != samples.shape:
            raise ValueError("length mismatch between samples and labels")
        if self.drop_step is not None:
            if not (0 <= self.drop_step < samples.size):
                raise ValueError("drop_step out of range")
            start = max(0, self.drop_step - LABEL_LEAD_STEPS)
            if labels[start:].any():
                raise ValueError("labels inconsistent with drop_step")
        for a in (samples, labels):
            a.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "provenance", dict(self.provenance))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def unstable(self) -> np.ndarray:
        return ~self.labels


@dataclass(frozen=True, eq=False)
class PressureRun:
    """Four pressure traces at 71 Hz plus their zero-position counts."""

    traces: tuple
    initial: tuple

    def __post_init__(self):
        traces = tuple(self.traces)
        if len(traces) != PRESSURE_CHANNELS:
            raise ValueError(f"expected {PRESSURE_CHANNELS} channels, got {len(traces)}")
        n = len(traces[0])
        if any(len(t) != n for t in traces):
            raise ValueError("length mismatch across channels")
        initial = tuple(float(v) for v in self.initial)
        if len(initial) != PRESSURE_CHANNELS:
            raise ValueError("one initial value required per channel")
        for t in traces:
            if t.samples.min() < 0 or t.samples.max() > 65535:
                raise ValueError("pressure sample outside [0, 65535]")
        object.__setattr__(self, "traces", traces)
        object.__setattr__(self, "initial", initial)

    @property
    def n_steps(self) -> int:
        return len(self.traces[0])

    @property
    def freq_hz(self) -> float:
        return self.traces[0].freq_hz


# -- drop detection and labeling ----------------------------------------


def detect_drop(
    trace,
    eps_drop: float = EPS_DROP_MN,
    arm_level: float = ARM_MN,
    sustain: int = DROP_SUSTAIN,
) -> int | None:
    """First step at/after lift where the signal stays below eps_drop.

    The scan arms at the first sample >= arm_level so that the empty-hand
    lead-in does not read as an instant drop; an unarmed trace has none.
    """
    x = trace.samples if isinstance(trace, SensorTrace) else np.asarray(trace, dtype=np.float64)
    armed = np.nonzero(x >= arm_level)[0]
    if armed.size == 0:
        return None
    low = x < eps_drop
    run = 0
    for t in range(int(armed[0]), x.size):
        run = run + 1 if low[t] else 0
        if run == sustain:
            return t - sustain + 1
    return None


def detect_pressure_drop(
    trace: SensorTrace,
    initial: float,
    margin: float = PRESSURE_MARGIN,
    sustain: int = DROP_SUSTAIN,
) -> int | None:
    """Pressure analogue: sustained fall back below initial + margin."""
    threshold = initial + margin
    return detect_drop(
        trace, eps_drop=threshold, arm_level=threshold + margin, sustain=sustain
    )


def label_slip(trace, drop_step: int | None) -> np.ndarray:
    """Per-step stable=True labels: unstable from drop_step - 20 onward.

    With no drop every step is stable. The unstable start clamps at 0.
    """
    n = len(trace) if isinstance(trace, SensorTrace) else len(np.asarray(trace))
    labels = np.ones(n, dtype=bool)
    if drop_step is None:
        return labels
    if not (0 <= drop_step < n):
        raise ValueError(f"drop_step out of range: {drop_step} not in [0, {n})")
    labels[max(0, drop_step - LABEL_LEAD_STEPS):] = False
    return labels


# -- windowing ------------------------------------------------------------


def window_trace(
    samples: np.ndarray,
    labels: np.ndarray,
    window_len: int = 160,
    drop_step: int | None = None,
    channel_id: int = 0,
    provenance: dict | None = None,
    truth_labels: bool = False,
) -> list[LabeledWindow]:
    """Cut non-overlapping windows; the trailing remainder is dropped."""
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    if samples.size < window_len:
        raise ValueError(
            f"trace shorter than window: {samples.size} < {window_len}"
        )
    if labels.shape != samples.shape:
        raise ValueError("length mismatch between samples and labels")
    provenance = dict(provenance or {})
    out = []
    for start in range(0, samples.size - window_len + 1, window_len):
        stop = start + window_len
        local_drop = None
        if not truth_labels and drop_step is not None and start <= drop_step < stop:
            local_drop = drop_step - start
        out.append(
            LabeledWindow(
                samples=samples[start:stop],
                labels=labels[start:stop],
                drop_step=local_drop,
                channel_id=channel_id,
                provenance=dict(provenance, start=start),
            )
        )
    return out


def window_batches(
    source,
    window_len: int = 160,
    channel: int = 0,
    labels: str = "detect",
) -> list[LabeledWindow]:
    """LabeledWindows for one channel of a GraspSet (or a bare trace).

    labels="detect" runs detect_drop + the 20-step pre-drop rule on the
    channel itself; labels="truth" takes the generator's slip_onset from
    the set meta (synthetic sets only) and marks [slip_onset, end).
    """
    if isinstance(source, SensorTrace):
        trace = source
        provenance = dict(trace.meta)
        if labels == "truth":
            raise ValueError("truth labels need a synthetic GraspSet")
    else:
        trace = source.channel(channel)
        provenance = {
            "set_id": source.set_id,
            "direction": source.direction,
            "object": source.object_id,
            "outcome": source.outcome,
        }
    if labels == "truth":
        onset = source.meta.get("slip_onset")
        lab = np.ones(len(trace), dtype=bool)
        if source.outcome == "failure":
            if onset is None:
                raise ValueError("truth labels need slip_onset in set meta")
            lab[int(onset):] = False
        return window_trace(
            trace.samples, lab, window_len,
            channel_id=trace.channel_id, provenance=provenance, truth_labels=True,
        )
    if labels != "detect":
        raise ValueError(f"labels must be detect|truth, got {labels!r}")
    drop = detect_drop(trace)
    lab = label_slip(trace, drop)
    return window_trace(
        trace.samples, lab, window_len, drop_step=drop,
        channel_id=trace.channel_id, provenance=provenance,
    )


# -- splitting -------------------------------------------------------------


def split(dataset, ratio: float = 0.8, seed: int = 0, stratify_by: str = "outcome"):
    """Seeded stratified set-level split into (train, test).

    Windows of one grasp never straddle the split because whole GraspSets
    are assigned. Per stratum the train share is floor(ratio * n); if that
    leaves either side empty overall, one set moves across.
    """
    sets = list(dataset)
    if len(sets) < 2:
        raise ValueError("need at least 2 sets to split")
    if not (0.0 < ratio < 1.0):
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if stratify_by == "outcome":
        key = lambda s: s.outcome
    elif stratify_by == "direction":
        key = lambda s: s.direction
    else:
        raise ValueError(f"stratify_by must be outcome|direction, got {stratify_by!r}")

    groups: dict[str, list] = {}
    for idx, s in enumerate(sets):
        groups.setdefault(key(s), []).append(idx)

    rng = rng_for(seed, "dataset-split")
    train_idx, test_idx = [], []
    for name in sorted(groups):
        idxs = np.array(groups[name])
        order = rng.permutation(idxs.size)
        n_train = int(ratio * idxs.size)
        train_idx.extend(idxs[order[:n_train]].tolist())
        test_idx.extend(idxs[order[n_train:]].tolist())
    if not train_idx:
        train_idx.append(test_idx.pop(0))
    if not test_idx:
        test_idx.append(train_idx.pop(0))
    train_idx.sort()
    test_idx.sort()
    return [sets[i] for i in train_idx], [sets[i] for i in test_idx]


# -- synthetic generators ---------------------------------------------------


@dataclass(frozen=True)
class SynthParams:
    """Shape of one synthetic grasp trace (force domain, mN)."""

    freq_hz: float = 16.7
    n_steps: int = 400
    grasp_force: float = 2000.0
    ramp_steps: int = 40
    slip_onset: int | None = 200
    slip_band_hz: float = 4.0
    slip_amplitude: float = 0.15   # fraction of grasp_force
    drop_step: int | None = 260
    decay_steps: int = 10
    noise_sd: float = 8.0

    def __post_init__(self):
        if self.slip_onset is not None:
            if self.drop_step is None:
                raise ValueError("slip_onset given without drop_step")
            if not (0 < self.slip_onset < self.drop_step):
                raise ValueError("require 0 < slip_onset < drop_step")
            if not (3.0 <= self.slip_band_hz <= 5.0):
                raise ValueError("slip_band_hz must lie in [3, 5]")
        if self.drop_step is not None and not (
            self.ramp_steps < self.drop_step < self.n_steps
        ):
            raise ValueError("require ramp_steps < drop_step < n_steps")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")


def _synth_channel(params: SynthParams, gain: float, rng) -> np.ndarray:
    p = params
    t = np.arange(p.n_steps)
    force = np.full(p.n_steps, p.grasp_force * gain)
    ramp = t < p.ramp_steps
    force[ramp] = p.grasp_force * gain * (t[ramp] + 1) / p.ramp_steps
    if p.slip_onset is not None:
        seg = (t >= p.slip_onset) & (t < p.drop_step)
        phase = 2.0 * np.pi * p.slip_band_hz * (t[seg] - p.slip_onset) / p.freq_hz
        force[seg] += p.slip_amplitude * p.grasp_force * gain * np.sin(phase)
    if p.drop_step is not None:
        d = p.drop_step
        tail = np.arange(d, min(d + p.decay_steps, p.n_steps))
        force[tail] = force[d - 1] * (1.0 - (tail - d + 1) / p.decay_steps)
        force[d + p.decay_steps:] = 0.0
    if p.noise_sd > 0:
        live = force > 0
        force[live] += rng.normal(0.0, p.noise_sd, size=int(live.sum()))
    return np.clip(np.rint(force), 0.0, 10000.0)


def synth_grasp(seed: int, params: SynthParams | None = None, **overrides) -> GraspSet:
    """One deterministic synthetic GraspSet with exact ground truth.

    Channels are gain-scaled copies (0.8-1.2) of a shared profile with
    independent noise; channel 0 carries gain closest to 1. Ground truth
    (slip_onset, drop_step) rides in the set meta; unstable = [slip_onset,
    end) for failure sets.
    """
    p = params if params is not None else SynthParams(**overrides)
    if params is not None and overrides:
        raise ValueError("pass params or overrides, not both")
    rng = rng_for(seed, "synth-grasp")
    gains = rng.uniform(0.8, 1.2, size=FORCE_CHANNELS)
    gains[0] = 1.0
    failure = p.slip_onset is not None
    meta = {"seed": seed, "synthetic": True}
    if failure:
        meta["slip_onset"] = int(p.slip_onset)
        meta["drop_step"] = int(p.drop_step)
    traces = tuple(
        SensorTrace(
            samples=_synth_channel(p, gains[ch], rng),
            freq_hz=p.freq_hz,
            channel_id=ch,
            meta={"source": "force"},
        )
        for ch in range(FORCE_CHANNELS)
    )
    return GraspSet(
        traces=traces,
        outcome="failure" if failure else "success",
        object_id=int(rng.integers(0, 10)),
        direction=DIRECTIONS[int(rng.integers(0, len(DIRECTIONS)))],
        weight=int(rng.integers(0, 3)),
        force_level=int(rng.integers(0, 3)),
        set_id=f"synth-{seed:06d}",
        meta=meta,
    )


def synth_force_dataset(
    n_sets: int,
    seed: int = 0,
    failure_fraction: float = 0.5,
    freq_hz: float = 16.7,
    n_steps: int = 400,
) -> list[GraspSet]:
    """A balanced batch of synthetic sets with per-set randomized shape.

    Failure sets draw slip_onset in [180, 240], a 3-5 Hz slip band, a
    12-20% vibration amplitude, and a drop 50-90 steps after onset (so
    some drops land beyond the windowed span and instability must be
    read from the vibration, not just the collapse to zero).
    """
    if n_sets < 1:
        raise ValueError("n_sets must be >= 1")
    rng = rng_for(seed, "synth-dataset")
    n_failure = int(round(n_sets * failure_fraction))
    sets = []
    for i in range(n_sets):
        failure = i < n_failure
        grasp_force = float(rng.uniform(1200.0, 3000.0))
        if failure:
            onset = int(rng.integers(180, 241))
            drop = onset + int(rng.integers(50, 91))
            p = SynthParams(
                freq_hz=freq_hz,
                n_steps=n_steps,
                grasp_force=grasp_force,
                slip_onset=onset,
                slip_band_hz=float(rng.uniform(3.0, 5.0)),
                slip_amplitude=float(rng.uniform(0.12, 0.20)),
                drop_step=min(drop, n_steps - 1),
            )
        else:
            p = SynthParams(
                freq_hz=freq_hz,
                n_steps=n_steps,
                grasp_force=grasp_force,
                slip_onset=None,
                drop_step=None,
            )
        sets.append(synth_grasp(int(rng.integers(0, 2**31)), p))
    return sets


PRESSURE_INITIAL = (6458.0, 6263.0, 6357.0, 6458.0)


def synth_pressure_run(
    seed: int,
    n_steps: int = 1600,
    freq_hz: float = 71.0,
    initial=PRESSURE_INITIAL,
    hold_level: float = 20000.0,
    drop_step: int | None = None,
    noise_sd: float = 15.0,
) -> PressureRun:
    """Pressure-domain analogue of synth_grasp: rise, hold, optional drop."""
    rng = rng_for(seed, "synth-pressure")
    rise = min(80, n_steps // 4)
    traces = []
    for ch in range(PRESSURE_CHANNELS):
        base = float(initial[ch])
        t = np.arange(n_steps)
        x = np.full(n_steps, hold_level)
        x[t < rise] = base + (hold_level - base) * (t[t < rise] + 1) / rise
        if drop_step is not None:
            if not (rise < drop_step < n_steps):
                raise ValueError("require rise < drop_step < n_steps")
            x[drop_step:] = base
        x += rng.normal(0.0, noise_sd, size=n_steps)
        x = np.clip(np.rint(x), 0.0, 65535.0)
        traces.append(
            SensorTrace(samples=x, freq_hz=freq_hz, channel_id=ch, meta={"source": "pressure"})
        )
    return PressureRun(traces=tuple(traces), initial=tuple(float(v) for v in initial))


# -- trace file serialization ----------------------------------------------


def _trace_lines(values: np.ndarray) -> list[str]:
    rows = np.rint(values).astype(np.int64)
    return [" ".join(str(v) for v in row) for row in rows]


def write_grasp_set(grasp: GraspSet, path) -> None:
    lines = [
        TRACE_FORMAT,
        "kind force",
        f"freq_hz {grasp.freq_hz:g}",
        f"channels {FORCE_CHANNELS}",
        f"outcome {grasp.outcome}",
        f"direction {grasp.direction}",
        f"object {grasp.object_id}",
        f"weight {grasp.weight}",
        f"force_level {grasp.force_level}",
    ]
    if "slip_onset" in grasp.meta:
        lines.append(f"slip_onset {int(grasp.meta['slip_onset'])}")
    if "drop_step" in grasp.meta:
        lines.append(f"drop_step {int(grasp.meta['drop_step'])}")
    lines.append("data")
    lines.extend(_trace_lines(grasp.as_matrix()))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_pressure_run(run: PressureRun, path) -> None:
    lines = [
        TRACE_FORMAT,
        "kind pressure",
        f"freq_hz {run.freq_hz:g}",
        f"channels {PRESSURE_CHANNELS}",
        "initial " + " ".join(f"{v:g}" for v in run.initial),
        "data",
    ]
    matrix = np.stack([t.samples for t in run.traces], axis=1)
    lines.extend(_trace_lines(matrix))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _parse_header(path, lines):
    if not lines or lines[0].strip() != TRACE_FORMAT:
        raise ValueError(f"{path}:1: not a {TRACE_FORMAT} file")
    header: dict[str, str] = {}
    body_start = None
    for ln, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped == "data":
            body_start = ln
            break
        parts = stripped.split(None, 1)
        if len(parts) != 2:
            raise ValueError(f"{path}:{ln}: malformed header line {stripped!r}")
        header[parts[0]] = parts[1]
    if body_start is None:
        raise ValueError(f"{path}: missing 'data' section")
    return header, body_start


def _parse_rows(path, lines, body_start: int, n_channels: int) -> np.ndarray:
    rows = []
    for ln, raw in enumerate(lines[body_start:], start=body_start + 1):
        stripped = raw.strip()
        if not stripped:
            continue
        cells = stripped.split()
        if len(cells) != n_channels:
            raise ValueError(
                f"{path}:{ln}: expected {n_channels} channels, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"{path}:{ln}: non-numeric value in {stripped!r}") from None
    if not rows:
        raise ValueError(f"{path}: empty input")
    return np.asarray(rows, dtype=np.float64)


def _require(header: dict, key: str, path) -> str:
    if key not in header:
        raise ValueError(f"{path}: missing header key {key!r}")
    return header[key]


def read_grasp_set(path) -> GraspSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header, body_start = _parse_header(path, lines)
    if header.get("kind", "force") != "force":
        raise ValueError(f"{path}: not a force trace file (kind {header.get('kind')!r})")
    n_channels = int(_require(header, "channels", path))
    if n_channels != FORCE_CHANNELS:
        raise ValueError(f"{path}: expected {FORCE_CHANNELS} channels, got {n_channels}")
    matrix = _parse_rows(path, lines, body_start, n_channels)
    freq_hz = float(_require(header, "freq_hz", path))
    meta = {}
    for key in ("slip_onset", "drop_step"):
        if key in header:
            meta[key] = int(header[key])
    traces = tuple(
        SensorTrace(
            samples=matrix[:, ch],
            freq_hz=freq_hz,
            channel_id=ch,
            meta={"source": "force"},
        )
        for ch in range(n_channels)
    )
    return GraspSet(
        traces=traces,
        outcome=_require(header, "outcome", path),
        object_id=int(_require(header, "object", path)),
        direction=_require(header, "direction", path),
        weight=int(header.get("weight", 0)),
        force_level=int(header.get("force_level", 0)),
        set_id=os.path.splitext(os.path.basename(str(path)))[0],
        meta=meta,
    )


def read_pressure_run(path) -> PressureRun:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header, body_start = _parse_header(path, lines)
    if header.get("kind") != "pressure":
        raise ValueError(f"{path}: not a pressure trace file (kind {header.get('kind')!r})")
    n_channels = int(_require(header, "channels", path))
    if n_channels != PRESSURE_CHANNELS:
        raise ValueError(f"{path}: expected {PRESSURE_CHANNELS} channels, got {n_channels}")
    matrix = _parse_rows(path, lines, body_start, n_channels)
    freq_hz = float(_require(header, "freq_hz", path))
    initial = tuple(float(v) for v in _require(header, "initial", path).split())
    traces = tuple(
        SensorTrace(
            samples=matrix[:, ch],
            freq_hz=freq_hz,
            channel_id=ch,
            meta={"source": "pressure"},
        )
        for ch in range(n_channels)
    )
    return PressureRun(traces=traces, initial=initial)


# -- dataset directory layout -----------------------------------------------


def save_force_dataset(sets, out_dir, prefix: str = "set") -> str:
    """Write one file per set plus manifest.json; returns the manifest path.

    An empty collection writes a manifest only (zero-set dataset).
    """
    sets = list(sets)
    os.makedirs(out_dir, exist_ok=True)
    files = []
    for i, grasp in enumerate(sets):
        name = f"{prefix}_{i:04d}.txt"
        write_grasp_set(grasp, os.path.join(out_dir, name))
        files.append(name)
    outcomes: dict[str, int] = {}
    directions: dict[str, int] = {}
    for g in sets:
        outcomes[g.outcome] = outcomes.get(g.outcome, 0) + 1
        directions[g.direction] = directions.get(g.direction, 0) + 1
    if sets:
        pooled = np.concatenate([g.as_matrix().ravel() for g in sets])
        force_range = [float(pooled.min()), float(pooled.max())]
    else:
        force_range = None
    manifest = {
        "format": TRACE_FORMAT,
        "kind": "force",
        "files": files,
        "n_sets": len(sets),
        "freq_hz": sets[0].freq_hz if sets else None,
        "n_steps": sets[0].n_steps if sets else None,
        "outcomes": outcomes,
        "directions": directions,
        "force_range_mn": force_range,
    }
    manifest_path = os.path.join(out_dir, "manifest.json")
    atomic_write_text(manifest_path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def load_force_dataset(path) -> list[GraspSet]:
    """Read every set file in a dataset directory, manifest order."""
    if os.path.isfile(path):
        return [read_grasp_set(path)]
    if not os.path.isdir(path):
        raise ValueError(f"no such dataset: {path}")
    manifest_path = os.path.join(path, "manifest.json")
    if os.path.exists(manifest_path):
        with open(manifest_path, "r", encoding="utf-8") as fh:
            names = json.load(fh)["files"]
    else:
        names = sorted(
            f for f in os.listdir(path)
            if f.endswith(".txt") and not f.startswith(".")
        )
        if not names:
            raise ValueError(f"{path}: empty input")
    return [read_grasp_set(os.path.join(path, name)) for name in names]


# -- foreign format conversion -----------------------------------------------


def convert_csv(
    src,
    dst,
    freq_hz: float = 16.7,
    outcome: str = "failure",
    direction: str = "back",
    object_id: int = 0,
    weight: int = 0,
    force_level: int = 0,
) -> GraspSet:
    """CSV (one row per step, 16 numeric columns, optional header row) ->
    trace file. Returns the parsed set for inspection."""
    rows = []
    with open(src, "r", encoding="utf-8", newline="") as fh:
        for ln, row in enumerate(csv.reader(fh), start=1):
            cells = [c.strip() for c in row if c.strip() != ""]
            if not cells:
                continue
            if ln == 1:
                try:
                    [float(c) for c in cells]
                except ValueError:
                    continue  # header row
            if len(cells) != FORCE_CHANNELS:
                raise ValueError(
                    f"{src}:{ln}: expected {FORCE_CHANNELS} channels, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                raise ValueError(f"{src}:{ln}: non-numeric value") from None
    if not rows:
        raise ValueError(f"{src}: empty input")
    matrix = np.asarray(rows, dtype=np.float64)
    traces = tuple(
        SensorTrace(
            samples=matrix[:, ch],
            freq_hz=freq_hz,
            channel_id=ch,
            meta={"source": "force"},
        )
        for ch in range(FORCE_CHANNELS)
    )
    grasp = GraspSet(
        traces=traces,
        outcome=outcome,
        object_id=object_id,
        direction=direction,
        weight=weight,
        force_level=force_level,
        set_id=os.path.splitext(os.path.basename(str(dst)))[0],
    )
    write_grasp_set(grasp, dst)
    return grasp

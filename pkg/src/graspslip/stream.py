"""Stream replay: incremental inference, grip-current policy, latency.

The replay loop maintains the causal STFT window and LSTM state
incrementally, so each step costs O(window) and produces the same
probabilities as the offline pipeline on the same samples (to 1e-12).
Timing is measured around the per-step inference call only; the replay
models no physics, it validates decisions and latency.

Event log format (CSV): step,channel,probability,label,latency_us with
label 1 = unstable. Controller trajectory: step,pj_ma,mj_ma.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from graspslip import nn
from graspslip.ioutil import atomic_write_text
from graspslip.models import GraspModel
from graspslip.signal import SensorTrace, normalize_array

PJ_INIT_MA = 50.0
MJ_INIT_MA = 25.0
PJ_STEP_MA = 5.0
MJ_STEP_MA = 10.0
# Bounded simulation: 2x the ~2 kg holding currents (100 / 200 mA).
PJ_MAX_MA = 200.0
MJ_MAX_MA = 400.0

SENSOR_BUDGET_MS = 4.0
MAX_SENSORS = 16


@dataclass(frozen=True)
class FrameClock:
    """Per-frame timing contract for the streaming predictor."""

    freq_hz: float
    sensor_budget_ms: float = SENSOR_BUDGET_MS
    n_sensors: int = MAX_SENSORS

    def __post_init__(self):
        if not (self.freq_hz > 0):
            raise ValueError("freq_hz must be > 0")
        if not (0 < self.n_sensors <= MAX_SENSORS):
            raise ValueError(f"n_sensors must be in 1..{MAX_SENSORS}")
        if not (self.sensor_budget_ms > 0):
            raise ValueError("sensor_budget_ms must be > 0")

    @property
    def frame_period_s(self) -> float:
        return 1.0 / self.freq_hz

    @property
    def frame_budget_ms(self) -> float:
        return self.n_sensors * self.sensor_budget_ms


@dataclass
class StepEvent:
    """One per-step prediction record in the replay log."""

    step: int
    channel: int
    probability: float
    unstable: bool
    latency_us: float = 0.0
    over_budget: bool = False


class StreamingPredictor:
    """Sample-at-a-time inference with the model's own feature pipeline.

    Keeps a window_len ring of normalized samples for the band magnitudes
    and one LstmState per stream; push() advances exactly one time step.
    """

    def __init__(self, model: GraspModel):
        if model.stats is None:
            raise ValueError("missing normalization stats; train or load a checkpoint first")
        self.model = model
        self.reset()

    def reset(self) -> None:
        self._buf = np.empty(self.model.stft_window)
        self._started = False
        self._states = [nn.LstmState.zeros(p.hidden_dim) for p in self.model.lstms]

    def push(self, sample: float) -> tuple[float, bool]:
        """Consume one raw sample, return (p_unstable, unstable flag)."""
        m = self.model
        x = float(normalize_array(np.array([sample]), m.stats)[0])
        if not self._started:
            self._buf[:] = x  # causal left-pad with the first sample
            self._started = True
        else:
            self._buf[:-1] = self._buf[1:]
            self._buf[-1] = x
        tag = m.variant.tag
        if tag == "A":
            streams = [np.array([x])]
        else:
            bands = np.abs(np.fft.rfft(self._buf)[1 : m.band_count + 1])
            if tag == "B":
                streams = [bands]
            elif tag == "C":
                streams = [np.concatenate([bands, [x]])]
            else:
                streams = [np.array([x]), bands]
        self._states = [
            nn.lstm_step(vec, st, p)
            for vec, st, p in zip(streams, self._states, m.lstms)
        ]
        h = np.concatenate([st.h for st in self._states])
        probs = nn.fc_softmax(h, m.head)
        p_unstable = float(probs[1])
        return p_unstable, p_unstable >= m.threshold


def replay(
    traces,
    model: GraspModel,
    clock: FrameClock | None = None,
    timing: bool = True,
) -> list[StepEvent]:
    """Run every trace through its own predictor, one frame at a time.

    Returns the merged log ordered by (step, channel). Budget overruns
    are flagged on the event, never fatal. timing=False zeroes latencies
    for byte-reproducible logs.
    """
    if isinstance(traces, SensorTrace):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise ValueError("empty input: no traces")
    freqs = {t.freq_hz for t in traces}
    if len(freqs) != 1:
        raise ValueError(f"frequency mismatch across traces: {sorted(freqs)}")
    if clock is None:
        clock = FrameClock(freq_hz=traces[0].freq_hz, n_sensors=min(len(traces), MAX_SENSORS))
    if len(traces) > clock.n_sensors:
        raise ValueError(f"{len(traces)} traces exceed the {clock.n_sensors}-sensor frame")

    predictors = [StreamingPredictor(model) for _ in traces]
    n_steps = min(len(t) for t in traces)
    # Use the traces' own channel ids only when they are distinct.
    ids_unique = len({t.channel_id for t in traces}) == len(traces)
    events: list[StepEvent] = []
    for step in range(n_steps):
        for ch, (trace, pred) in enumerate(zip(traces, predictors)):
            channel = trace.channel_id if ids_unique else ch
            if timing:
                t0 = time.perf_counter_ns()
                p, flag = pred.push(trace.samples[step])
                lat_us = (time.perf_counter_ns() - t0) / 1e3
            else:
                p, flag = pred.push(trace.samples[step])
                lat_us = 0.0
            events.append(
                StepEvent(
                    step=step,
                    channel=channel,
                    probability=p,
                    unstable=flag,
                    latency_us=lat_us,
                    over_budget=lat_us > clock.sensor_budget_ms * 1e3,
                )
            )
    return events


def slip_events(events) -> list[StepEvent]:
    """Rising edges of the per-channel prediction streams.

    A channel whose very first prediction is unstable counts as one edge
    (the implicit prior state is stable).
    """
    last: dict[int, bool] = {}
    edges = []
    for ev in sorted(events, key=lambda e: (e.step, e.channel)):
        prev = last.get(ev.channel, False)
        if ev.unstable and not prev:
            edges.append(ev)
        last[ev.channel] = ev.unstable
    return edges


@dataclass
class GripState:
    """Joint currents driven by the slip-triggered increment policy."""

    pj_ma: float = PJ_INIT_MA
    mj_ma: float = MJ_INIT_MA
    slip_events: int = 0
    history: list = field(default_factory=list)


def grip_controller(
    events,
    pj_init: float = PJ_INIT_MA,
    mj_init: float = MJ_INIT_MA,
    pj_step: float = PJ_STEP_MA,
    mj_step: float = MJ_STEP_MA,
    pj_max: float = PJ_MAX_MA,
    mj_max: float = MJ_MAX_MA,
) -> GripState:
    """Fold the event log into a current trajectory.

    Each rising-edge slip event adds +5 mA (pj) and +10 mA (mj), clamped
    at the configured ceilings; currents never decrease. Replaying the
    same log reproduces the same trajectory.
    """
    state = GripState(pj_ma=pj_init, mj_ma=mj_init)
    for ev in slip_events(events):
        state.pj_ma = min(state.pj_ma + pj_step, pj_max)
        state.mj_ma = min(state.mj_ma + mj_step, mj_max)
        state.slip_events += 1
        state.history.append((ev.step, state.pj_ma, state.mj_ma))
    return state


def _nearest_rank(sorted_values: np.ndarray, pct: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    n = sorted_values.size
    rank = max(1, int(np.ceil(pct / 100.0 * n)))
    return float(sorted_values[rank - 1])


def latency_report(events, clock: FrameClock | None = None) -> dict:
    """p50/p95/max per-sensor latency plus frame totals and a verdict."""
    events = list(events)
    if not events:
        raise ValueError("no events")
    budget_ms = (clock.sensor_budget_ms if clock else SENSOR_BUDGET_MS)
    lat_ms = np.sort(np.array([e.latency_us for e in events]) / 1e3)

    frames: dict[int, float] = {}
    channels = set()
    for e in events:
        frames[e.step] = frames.get(e.step, 0.0) + e.latency_us / 1e3
        channels.add(e.channel)
    frame_ms = np.sort(np.array(list(frames.values())))
    n_sensors = len(channels)
    frame_budget_ms = (
        clock.frame_budget_ms if clock else n_sensors * SENSOR_BUDGET_MS
    )

    p95 = _nearest_rank(lat_ms, 95.0)
    return {
        "n_events": len(events),
        "n_sensors": n_sensors,
        "per_sensor_ms": {
            "p50": _nearest_rank(lat_ms, 50.0),
            "p95": p95,
            "max": float(lat_ms[-1]),
        },
        "per_frame_ms": {
            "p50": _nearest_rank(frame_ms, 50.0),
            "p95": _nearest_rank(frame_ms, 95.0),
            "max": float(frame_ms[-1]),
        },
        "budget_ms": budget_ms,
        "frame_budget_ms": frame_budget_ms,
        "n_over_budget": int(sum(1 for e in events if e.over_budget)),
        "pass": bool(p95 < budget_ms),
    }


# -- log files ---------------------------------------------------------------

_LOG_HEADER = "step,channel,probability,label,latency_us"


def write_event_log(events, path) -> None:
    lines = [_LOG_HEADER]
    for e in events:
        lines.append(
            f"{e.step},{e.channel},{e.probability:.17g},"
            f"{int(e.unstable)},{e.latency_us:.3f}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_event_log(path) -> list[StepEvent]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _LOG_HEADER:
        raise ValueError(f"{path}:1: not an event log (missing header)")
    events = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise ValueError(f"{path}:{ln}: expected 5 fields, got {len(cells)}")
        try:
            events.append(
                StepEvent(
                    step=int(cells[0]),
                    channel=int(cells[1]),
                    probability=float(cells[2]),
                    unstable=bool(int(cells[3])),
                    latency_us=float(cells[4]),
                )
            )
        except ValueError as exc:
            raise ValueError(f"{path}:{ln}: {exc}") from None
    return events


def write_trajectory(state: GripState, path) -> None:
    lines = ["step,pj_ma,mj_ma"]
    for step, pj, mj in state.history:
        lines.append(f"{step},{pj:g},{mj:g}")
    atomic_write_text(path, "\n".join(lines) + "\n")

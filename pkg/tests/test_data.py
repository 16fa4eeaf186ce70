import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspslip import data
from graspslip.data import (
    GraspSet,
    LabeledWindow,
    SynthParams,
    convert_csv,
    detect_drop,
    detect_pressure_drop,
    label_slip,
    load_force_dataset,
    read_grasp_set,
    read_pressure_run,
    save_force_dataset,
    split,
    synth_force_dataset,
    synth_grasp,
    synth_pressure_run,
    window_batches,
    window_trace,
    write_grasp_set,
    write_pressure_run,
)
from graspslip.signal import SensorTrace, _sliding_band_magnitudes, normalize_array, compute_norm_stats
from tests import oracles


def force_trace(samples, channel_id=0):
    return SensorTrace(
        samples=np.asarray(samples, dtype=float),
        freq_hz=16.7,
        channel_id=channel_id,
        meta={"source": "force"},
    )


def make_set(n_steps=400, outcome="success", **kw):
    traces = tuple(force_trace(np.full(n_steps, 1000.0), ch) for ch in range(16))
    return GraspSet(traces=traces, outcome=outcome, object_id=0, direction="back", **kw)


# -- GraspSet validation --------------------------------------------------


def test_grasp_set_requires_16_channels():
    traces = tuple(force_trace(np.ones(10), ch) for ch in range(4))
    with pytest.raises(ValueError, match="expected 16 channels, got 4"):
        GraspSet(traces=traces, outcome="success", object_id=0, direction="back")


def test_grasp_set_rejects_ragged_channels():
    traces = tuple(force_trace(np.ones(10 + (ch == 3)), ch) for ch in range(16))
    with pytest.raises(ValueError, match="length mismatch across channels"):
        GraspSet(traces=traces, outcome="success", object_id=0, direction="back")


def test_grasp_set_validates_outcome_and_direction():
    with pytest.raises(ValueError, match="outcome must be"):
        make_set(outcome="meh")
    traces = tuple(force_trace(np.ones(10), ch) for ch in range(16))
    with pytest.raises(ValueError, match="direction must be one of"):
        GraspSet(traces=traces, outcome="success", object_id=0, direction="up")


def test_grasp_set_matrix_shape():
    s = make_set(n_steps=50)
    assert s.as_matrix().shape == (50, 16)
    assert s.n_steps == 50
    assert s.freq_hz == 16.7


# -- drop detection ----------------------------------------------------------


def test_detect_drop_basic():
    x = np.concatenate([np.zeros(5), np.full(20, 1500.0), np.zeros(10)])
    assert detect_drop(x) == 25


def test_detect_drop_ignores_unarmed_lead_in():
    # the empty-hand zeros before lift must not read as a drop
    x = np.concatenate([np.zeros(30), np.full(50, 900.0), np.zeros(5)])
    assert detect_drop(x) == 80


def test_detect_drop_requires_sustained_low():
    x = np.full(40, 800.0)
    x[10:12] = 0.0  # two-step dip recovers: not a drop
    assert detect_drop(x) is None
    x[30:33] = 0.0
    assert detect_drop(x) == 30


def test_detect_drop_never_armed():
    assert detect_drop(np.full(50, 100.0)) is None
    assert detect_drop(np.zeros(50)) is None


def test_detect_drop_accepts_trace_objects():
    t = force_trace(np.concatenate([np.full(30, 1000.0), np.zeros(8)]))
    assert detect_drop(t) == 30


@given(st.integers(min_value=5, max_value=60), st.integers(min_value=10, max_value=50))
@settings(max_examples=30)
def test_detect_drop_matches_scan_oracle(hold, tail):
    rng = np.random.default_rng(hold * 100 + tail)
    x = np.concatenate(
        [
            rng.uniform(0, 300, size=10),
            rng.uniform(200, 2000, size=hold),
            rng.uniform(0, 80, size=tail),
        ]
    )
    assert detect_drop(x) == oracles.scan_drop(x, 50.0, 200.0, 3)


def test_detect_pressure_drop():
    x = np.concatenate([np.full(40, 20000.0), np.full(20, 6500.0)])
    t = SensorTrace(samples=x, freq_hz=71.0, channel_id=0, meta={})
    assert detect_pressure_drop(t, initial=6458.0) == 40
    hold = SensorTrace(samples=np.full(60, 20000.0), freq_hz=71.0, channel_id=0, meta={})
    assert detect_pressure_drop(hold, initial=6458.0) is None


# -- labeling -------------------------------------------------------------------


def test_label_slip_marks_20_steps_before_drop():
    labels = label_slip(np.zeros(160), drop_step=100)
    assert labels[:80].all()
    assert not labels[80:].any()


def test_label_slip_clamps_at_zero():
    labels = label_slip(np.zeros(50), drop_step=5)
    assert not labels.any()


def test_label_slip_no_drop_all_stable():
    assert label_slip(np.zeros(50), drop_step=None).all()


def test_label_slip_range_check():
    with pytest.raises(ValueError, match="drop_step out of range"):
        label_slip(np.zeros(50), drop_step=50)


# -- LabeledWindow ---------------------------------------------------------------


def test_labeled_window_validation():
    with pytest.raises(ValueError, match="empty input"):
        LabeledWindow(samples=np.zeros(0), labels=np.zeros(0, dtype=bool))
    with pytest.raises(ValueError, match="length mismatch"):
        LabeledWindow(samples=np.zeros(5), labels=np.zeros(4, dtype=bool))
    with pytest.raises(ValueError, match="drop_step out of range"):
        LabeledWindow(samples=np.zeros(5), labels=np.zeros(5, dtype=bool), drop_step=7)


def test_labeled_window_consistency_with_drop():
    labels = np.ones(100, dtype=bool)
    labels[30:] = False
    w = LabeledWindow(samples=np.zeros(100), labels=labels, drop_step=50)
    np.testing.assert_array_equal(w.unstable, ~labels)
    bad = np.ones(100, dtype=bool)  # stable after the drop: inconsistent
    with pytest.raises(ValueError, match="labels inconsistent with drop_step"):
        LabeledWindow(samples=np.zeros(100), labels=bad, drop_step=50)


def test_labeled_window_arrays_read_only():
    w = LabeledWindow(samples=np.zeros(5), labels=np.ones(5, dtype=bool))
    with pytest.raises(ValueError):
        w.samples[0] = 1.0


# -- windowing ---------------------------------------------------------------------


def test_window_counts():
    labels = np.ones(400, dtype=bool)
    assert len(window_trace(np.zeros(400), labels, 160)) == 2
    labels = np.ones(50560, dtype=bool)
    assert len(window_trace(np.zeros(50560), labels, 160)) == 316


def test_window_remainder_dropped():
    labels = np.ones(330, dtype=bool)
    wins = window_trace(np.arange(330.0), labels, 160)
    assert len(wins) == 2
    np.testing.assert_array_equal(wins[1].samples, np.arange(160.0, 320.0))


def test_window_too_short():
    with pytest.raises(ValueError, match="trace shorter than window: 100 < 160"):
        window_trace(np.zeros(100), np.ones(100, dtype=bool), 160)


def test_window_slices_match_source(rng):
    x = rng.uniform(0, 100, size=480)
    labels = label_slip(x, drop_step=250)
    wins = window_trace(x, labels, 160, drop_step=250)
    for i, w in enumerate(wins):
        np.testing.assert_array_equal(w.samples, x[i * 160 : (i + 1) * 160])
        np.testing.assert_array_equal(w.labels, labels[i * 160 : (i + 1) * 160])
        assert w.provenance["start"] == i * 160


def test_window_drop_step_is_window_relative(rng):
    x = rng.uniform(0, 100, size=480)
    labels = label_slip(x, drop_step=250)
    wins = window_trace(x, labels, 160, drop_step=250)
    assert wins[0].drop_step is None
    assert wins[1].drop_step == 90  # 250 - 160
    assert wins[2].drop_step is None
    # window 1: unstable from 230 onward, i.e. local step 70
    assert wins[1].labels[:70].all() and not wins[1].labels[70:].any()


def test_window_truth_mode_has_no_local_drop(rng):
    x = rng.uniform(0, 100, size=320)
    labels = np.ones(320, dtype=bool)
    labels[200:] = False
    wins = window_trace(x, labels, 160, drop_step=250, truth_labels=True)
    assert all(w.drop_step is None for w in wins)
    assert not wins[1].labels[40:].any()


def test_window_batches_detect_mode():
    sets = synth_force_dataset(2, seed=11, failure_fraction=1.0)
    grasp = sets[0]
    wins = window_batches(grasp, window_len=160, channel=0, labels="detect")
    assert len(wins) == grasp.n_steps // 160
    drop = detect_drop(grasp.channel(0))
    expected = label_slip(grasp.channel(0), drop)
    got = np.concatenate([w.labels for w in wins])
    np.testing.assert_array_equal(got, expected[: len(got)])
    assert wins[0].provenance["set_id"] == grasp.set_id
    assert wins[0].provenance["outcome"] == "failure"


def test_window_batches_truth_mode():
    sets = synth_force_dataset(2, seed=12, failure_fraction=1.0)
    grasp = sets[0]
    onset = grasp.meta["slip_onset"]
    wins = window_batches(grasp, window_len=160, channel=0, labels="truth")
    flat = np.concatenate([w.labels for w in wins])
    assert flat[:onset].all()
    assert not flat[onset:].any()
    assert all(w.drop_step is None for w in wins)


def test_window_batches_truth_needs_onset():
    grasp = make_set(outcome="failure")  # no slip_onset in meta
    with pytest.raises(ValueError, match="truth labels need slip_onset"):
        window_batches(grasp, labels="truth")
    bare = force_trace(np.full(400, 1000.0))
    with pytest.raises(ValueError, match="truth labels need a synthetic GraspSet"):
        window_batches(bare, labels="truth")


def test_window_batches_rejects_bad_mode():
    with pytest.raises(ValueError, match="labels must be detect|truth"):
        window_batches(make_set(), labels="guess")


def test_window_batches_on_bare_trace():
    t = force_trace(np.full(400, 1000.0), channel_id=7)
    wins = window_batches(t, window_len=160)
    assert len(wins) == 2
    assert wins[0].channel_id == 7
    assert wins[0].labels.all()


# -- splitting -----------------------------------------------------------------------


def test_split_ratio_and_partition():
    sets = synth_force_dataset(10, seed=1)
    train, test = split(sets, ratio=0.8, seed=0)
    assert len(train) == 8 and len(test) == 2
    ids = lambda xs: {s.set_id for s in xs}
    assert ids(train) | ids(test) == ids(sets)
    assert ids(train) & ids(test) == set()


def test_split_deterministic():
    sets = synth_force_dataset(10, seed=1)
    t1, e1 = split(sets, ratio=0.7, seed=5)
    t2, e2 = split(sets, ratio=0.7, seed=5)
    assert [s.set_id for s in t1] == [s.set_id for s in t2]
    assert [s.set_id for s in e1] == [s.set_id for s in e2]
    t3, _ = split(sets, ratio=0.7, seed=6)
    assert [s.set_id for s in t1] != [s.set_id for s in t3]


def test_split_stratifies_outcomes():
    sets = synth_force_dataset(20, seed=2, failure_fraction=0.5)
    train, test = split(sets, ratio=0.8, seed=0)
    assert sum(s.outcome == "failure" for s in train) == 8
    assert sum(s.outcome == "failure" for s in test) == 2


def test_split_validation():
    sets = synth_force_dataset(4, seed=3)
    with pytest.raises(ValueError, match="ratio must be in"):
        split(sets, ratio=1.0)
    with pytest.raises(ValueError, match="need at least 2 sets"):
        split(sets[:1])
    with pytest.raises(ValueError, match="stratify_by"):
        split(sets, stratify_by="weight")


def test_split_never_leaves_a_side_empty():
    sets = synth_force_dataset(2, seed=4)
    train, test = split(sets, ratio=0.9, seed=0)
    assert len(train) == 1 and len(test) == 1


# -- synthesis ------------------------------------------------------------------------


def test_synth_grasp_deterministic():
    a = synth_grasp(42)
    b = synth_grasp(42)
    np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())
    assert a.set_id == "synth-000042"
    c = synth_grasp(43)
    assert not np.array_equal(a.as_matrix(), c.as_matrix())


def test_synth_grasp_channel0_unit_gain():
    g = synth_grasp(7, SynthParams(grasp_force=2000.0, slip_onset=None, drop_step=None))
    plateau = g.channel(0).samples[60:]
    assert abs(plateau.mean() - 2000.0) < 5.0


def test_synth_success_set_holds():
    g = synth_grasp(9, SynthParams(slip_onset=None, drop_step=None))
    assert g.outcome == "success"
    assert "slip_onset" not in g.meta
    for ch in range(16):
        assert detect_drop(g.channel(ch)) is None


def test_synth_failure_set_drops_where_declared():
    p = SynthParams(slip_onset=200, drop_step=260)
    g = synth_grasp(5, p)
    assert g.outcome == "failure"
    assert g.meta["slip_onset"] == 200 and g.meta["drop_step"] == 260
    for ch in range(16):
        d = detect_drop(g.channel(ch))
        assert d is not None
        assert 260 <= d <= 260 + p.decay_steps + 1


def test_synth_vibration_lands_in_band():
    # 4 Hz on a 16.7 Hz clock: window energy concentrates near band
    # k = 4/16.7*20 ~ 4.8; compare against the pre-onset plateau.
    g = synth_grasp(3, SynthParams(slip_onset=200, drop_step=280, slip_amplitude=0.2))
    x = g.channel(0).samples
    stats = compute_norm_stats([x])
    bands = _sliding_band_magnitudes(normalize_array(x, stats), 20, 1, 10)
    quiet = bands[100:190].sum(axis=1).mean()
    vibrating = bands[230:270].sum(axis=1).mean()
    assert vibrating > 5 * quiet
    peak = bands[230:270].mean(axis=0).argmax()
    assert peak in (3, 4)  # band index for bins 4..5


def test_synth_params_validation():
    with pytest.raises(ValueError, match="slip_onset given without drop_step"):
        SynthParams(slip_onset=100, drop_step=None)
    with pytest.raises(ValueError, match="0 < slip_onset < drop_step"):
        SynthParams(slip_onset=300, drop_step=260)
    with pytest.raises(ValueError, match="slip_band_hz"):
        SynthParams(slip_band_hz=7.0)
    with pytest.raises(ValueError, match="ramp_steps < drop_step"):
        SynthParams(slip_onset=10, drop_step=30, ramp_steps=40)
    with pytest.raises(ValueError, match="noise_sd"):
        SynthParams(noise_sd=-1.0)
    with pytest.raises(ValueError, match="params or overrides"):
        synth_grasp(0, SynthParams(), n_steps=100)


def test_synth_dataset_balance_and_ranges():
    sets = synth_force_dataset(6, seed=0, failure_fraction=0.5)
    assert [s.outcome for s in sets] == ["failure"] * 3 + ["success"] * 3
    for s in sets[:3]:
        onset, drop = s.meta["slip_onset"], s.meta["drop_step"]
        assert 180 <= onset <= 240
        assert 50 <= drop - onset <= 90
    with pytest.raises(ValueError, match="n_sets must be >= 1"):
        synth_force_dataset(0)


def test_synth_dataset_deterministic():
    a = synth_force_dataset(4, seed=9)
    b = synth_force_dataset(4, seed=9)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.as_matrix(), y.as_matrix())


def test_synth_samples_are_integers_in_range():
    g = synth_grasp(1)
    m = g.as_matrix()
    np.testing.assert_array_equal(m, np.rint(m))
    assert m.min() >= 0 and m.max() <= 10000


# -- pressure -------------------------------------------------------------------------


def test_synth_pressure_run_shape_and_detection():
    run = synth_pressure_run(0, n_steps=800, drop_step=500)
    assert run.n_steps == 800
    assert run.freq_hz == 71.0
    for ch in range(4):
        d = detect_pressure_drop(run.traces[ch], initial=run.initial[ch])
        assert d is not None and abs(d - 500) <= 2
    steady = synth_pressure_run(0, n_steps=800, drop_step=None)
    for ch in range(4):
        assert detect_pressure_drop(steady.traces[ch], initial=steady.initial[ch]) is None


def test_pressure_file_round_trip(tmp_path):
    run = synth_pressure_run(4, n_steps=300, drop_step=200)
    path = tmp_path / "run.txt"
    write_pressure_run(run, path)
    again = read_pressure_run(path)
    assert again.initial == run.initial
    assert again.freq_hz == run.freq_hz
    for a, b in zip(run.traces, again.traces):
        np.testing.assert_array_equal(a.samples, b.samples)


def test_read_pressure_rejects_force_file(tmp_path):
    g = synth_grasp(0, SynthParams(n_steps=60, slip_onset=None, drop_step=None))
    path = tmp_path / "f.txt"
    write_grasp_set(g, path)
    with pytest.raises(ValueError, match="not a pressure trace file"):
        read_pressure_run(path)


# -- trace files ------------------------------------------------------------------------


def test_grasp_file_round_trip(tmp_path):
    g = synth_grasp(21, SynthParams(slip_onset=200, drop_step=260))
    path = tmp_path / "g.txt"
    write_grasp_set(g, path)
    again = read_grasp_set(path)
    np.testing.assert_array_equal(again.as_matrix(), g.as_matrix())
    assert again.outcome == g.outcome
    assert again.direction == g.direction
    assert again.object_id == g.object_id
    assert again.meta["slip_onset"] == 200
    assert again.meta["drop_step"] == 260
    assert again.freq_hz == g.freq_hz
    assert again.set_id == "g"


def test_grasp_file_matches_independent_parser(tmp_path):
    g = synth_grasp(22)
    path = tmp_path / "g.txt"
    write_grasp_set(g, path)
    rows = oracles.parse_trace_matrix(path.read_text())
    np.testing.assert_array_equal(np.asarray(rows, dtype=float), g.as_matrix())


def test_read_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("hello world\n1 2 3\n")
    with pytest.raises(ValueError, match="not a graspslip-trace v1 file"):
        read_grasp_set(path)


def test_read_reports_malformed_header_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("graspslip-trace v1\nkind\ndata\n1\n")
    with pytest.raises(ValueError, match=r"bad\.txt:2: malformed header line"):
        read_grasp_set(path)


def test_read_requires_data_section(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("graspslip-trace v1\nkind force\n")
    with pytest.raises(ValueError, match="missing 'data' section"):
        read_grasp_set(path)


def test_read_reports_bad_row_width(tmp_path):
    g = synth_grasp(1, SynthParams(n_steps=50, slip_onset=None, drop_step=None))
    path = tmp_path / "g.txt"
    write_grasp_set(g, path)
    lines = path.read_text().splitlines()
    body = lines.index("data") + 1
    lines[body + 2] = "1 2 3"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match=rf"g\.txt:{body + 3}: expected 16 channels, got 3"):
        read_grasp_set(path)


def test_read_reports_non_numeric(tmp_path):
    g = synth_grasp(1, SynthParams(n_steps=50, slip_onset=None, drop_step=None))
    path = tmp_path / "g.txt"
    write_grasp_set(g, path)
    text = path.read_text().replace("\ndata\n", "\ndata\n" + "x " * 15 + "x\n", 1)
    path.write_text(text)
    with pytest.raises(ValueError, match="non-numeric value"):
        read_grasp_set(path)


def test_read_rejects_empty_body(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text(
        "graspslip-trace v1\nkind force\nfreq_hz 16.7\nchannels 16\n"
        "outcome success\ndirection back\nobject 0\ndata\n"
    )
    with pytest.raises(ValueError, match="empty input"):
        read_grasp_set(path)


# -- dataset directories -----------------------------------------------------------------


def test_save_and_load_dataset_round_trip(tmp_path):
    sets = synth_force_dataset(4, seed=13)
    out = tmp_path / "ds"
    manifest_path = save_force_dataset(sets, out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_sets"] == 4
    assert len(manifest["files"]) == 4
    assert manifest["outcomes"] == {"failure": 2, "success": 2}
    again = load_force_dataset(out)
    assert len(again) == 4
    for a, b in zip(sets, again):
        np.testing.assert_array_equal(a.as_matrix(), b.as_matrix())
        assert a.outcome == b.outcome
    assert manifest_path == str(out / "manifest.json")


def test_empty_dataset_is_manifest_only(tmp_path):
    out = tmp_path / "empty"
    save_force_dataset([], out)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["n_sets"] == 0
    assert manifest["files"] == []
    assert manifest["freq_hz"] is None
    assert load_force_dataset(out) == []


def test_load_dataset_single_file(tmp_path):
    g = synth_grasp(2)
    path = tmp_path / "one.txt"
    write_grasp_set(g, path)
    got = load_force_dataset(path)
    assert len(got) == 1
    np.testing.assert_array_equal(got[0].as_matrix(), g.as_matrix())


def test_load_dataset_missing_path(tmp_path):
    with pytest.raises(ValueError, match="no such dataset"):
        load_force_dataset(tmp_path / "nope")
    bare = tmp_path / "bare"
    bare.mkdir()
    with pytest.raises(ValueError, match="empty input"):
        load_force_dataset(bare)


# -- csv conversion ------------------------------------------------------------------------


def test_convert_csv_with_header_row(tmp_path):
    rng = np.random.default_rng(0)
    matrix = rng.integers(0, 3000, size=(50, 16))
    src = tmp_path / "raw.csv"
    header = ",".join(f"ch{i}" for i in range(16))
    body = "\n".join(",".join(str(v) for v in row) for row in matrix)
    src.write_text(header + "\n" + body + "\n")
    dst = tmp_path / "out.txt"
    g = convert_csv(src, dst, outcome="success", direction="top")
    np.testing.assert_array_equal(g.as_matrix(), matrix)
    again = read_grasp_set(dst)
    np.testing.assert_array_equal(again.as_matrix(), matrix)
    assert again.direction == "top"


def test_convert_csv_without_header(tmp_path):
    matrix = np.arange(32).reshape(2, 16)
    src = tmp_path / "raw.csv"
    src.write_text("\n".join(",".join(str(v) for v in row) for row in matrix) + "\n")
    g = convert_csv(src, tmp_path / "out.txt")
    np.testing.assert_array_equal(g.as_matrix(), matrix)


def test_convert_csv_bad_width(tmp_path):
    src = tmp_path / "raw.csv"
    src.write_text("1,2,3\n")
    with pytest.raises(ValueError, match="expected 16 channels, got 3"):
        convert_csv(src, tmp_path / "out.txt")

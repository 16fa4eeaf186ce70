"""Model zoo: the four slip-classifier variants, training, checkpoints.

Variants (by input wiring, all sharing one 2-class softmax head):
    A "lstm"            normalized force column only
    B "stft-lstm"       the 10 causal band magnitudes
    C "data-stft-lstm"  bands plus the force column (11 inputs)
    D "lstm-stft-lstm"  two LSTMs, force and bands, hidden states
                        concatenated before the head
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from graspslip import nn
from graspslip.ioutil import atomic_write_bytes, sha256_bytes
from graspslip.nn import AdamState, FcHead, LstmParams, TrainingDiverged
from graspslip.signal import (
    DEFAULT_BAND_COUNT,
    DEFAULT_WINDOW_LEN,
    NormStats,
    _sliding_band_magnitudes,
    normalize_array,
)


@dataclass(frozen=True)
class ModelVariant:
    tag: str
    name: str
    stream_dims: tuple[int, ...]

    @property
    def n_streams(self) -> int:
        return len(self.stream_dims)


VARIANTS = {
    "A": ModelVariant("A", "lstm", (1,)),
    "B": ModelVariant("B", "stft-lstm", (10,)),
    "C": ModelVariant("C", "data-stft-lstm", (11,)),
    "D": ModelVariant("D", "lstm-stft-lstm", (1, 10)),
}

_BY_NAME = {v.name: v for v in VARIANTS.values()}


def get_variant(key: str) -> ModelVariant:
    """Look up a variant by tag ('A'..'D') or name ('stft-lstm', ...)."""
    k = str(key).strip()
    if k.upper() in VARIANTS:
        return VARIANTS[k.upper()]
    norm = k.lower().replace("_", "-").replace(" ", "-")
    if norm in _BY_NAME:
        return _BY_NAME[norm]
    raise ValueError(f"unknown model variant {key!r}; expected one of "
                     f"{sorted(VARIANTS)} or {sorted(_BY_NAME)}")


LOSS_MODES = ("per-step", "last-step")
INIT_MODES = ("seeded-uniform", "literal-zeros")


@dataclass(frozen=True)
class TrainConfig:
    """Training-loop knobs. One optimizer step consumes one window."""

    window_len: int = 160
    lstm_units: int = 128
    lr: float = 0.0006
    epochs: int = 50
    seed: int = 0
    clip_norm: float | None = 5.0
    loss_mode: str = "per-step"
    init_mode: str = "seeded-uniform"
    stft_window: int = DEFAULT_WINDOW_LEN
    band_count: int = DEFAULT_BAND_COUNT
    threshold: float = 0.5
    early_stop_patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.window_len <= self.stft_window:
            raise ValueError("window_len must exceed the STFT window")
        if not (self.lr > 0):
            raise ValueError("lr must be > 0")
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class Prediction:
    """Per-step instability probabilities and thresholded flags."""

    p_unstable: np.ndarray
    unstable: np.ndarray

    def __len__(self) -> int:
        return int(self.p_unstable.size)


# Class indices for the softmax head.
CLASS_STABLE = 0
CLASS_UNSTABLE = 1


class GraspModel:
    """A variant's parameters plus its frozen feature pipeline."""

    def __init__(
        self,
        variant: ModelVariant,
        lstms: list[LstmParams],
        head: FcHead,
        stats: NormStats | None = None,
        stft_window: int = DEFAULT_WINDOW_LEN,
        band_count: int = DEFAULT_BAND_COUNT,
        loss_mode: str = "per-step",
        threshold: float = 0.5,
    ):
        if len(lstms) != variant.n_streams:
            raise ValueError("one LSTM required per input stream")
        for dim, p in zip(variant.stream_dims, lstms):
            if p.input_dim != dim:
                raise ValueError(f"LSTM input dim {p.input_dim} != stream dim {dim}")
        if head.in_dim != sum(p.hidden_dim for p in lstms):
            raise ValueError("head input dim must equal total hidden dim")
        self.variant = variant
        self.lstms = lstms
        self.head = head
        self.stats = stats
        self.stft_window = stft_window
        self.band_count = band_count
        self.loss_mode = loss_mode
        self.threshold = threshold

    # -- construction -------------------------------------------------

    @classmethod
    def build(cls, variant: ModelVariant | str, config: TrainConfig, seed: int | None = None) -> "GraspModel":
        variant = variant if isinstance(variant, ModelVariant) else get_variant(variant)
        rng = np.random.default_rng(config.seed if seed is None else seed)
        zeros = config.init_mode == "literal-zeros"
        lstms = [
            LstmParams.init(dim, config.lstm_units, rng, zeros=zeros)
            for dim in variant.stream_dims
        ]
        head = FcHead.init(config.lstm_units * variant.n_streams, rng, zeros=zeros)
        return cls(
            variant=variant,
            lstms=lstms,
            head=head,
            stft_window=config.stft_window,
            band_count=config.band_count,
            loss_mode=config.loss_mode,
            threshold=config.threshold,
        )

    @property
    def hidden_dim(self) -> int:
        return self.lstms[0].hidden_dim

    # -- feature pipeline ---------------------------------------------

    def featurize(self, samples: np.ndarray) -> list[np.ndarray]:
        """Raw window -> one (n, dim) feature matrix per input stream.

        Normalizes with the stored training stats, then derives band
        magnitudes from the normalized signal where the variant needs
        them. Accepts any length >= 1; training enforces the window size.
        """
        if self.stats is None:
            raise ValueError("missing normalization stats; train or load a checkpoint first")
        x = np.asarray(samples, dtype=np.float64)
        if x.ndim != 1 or x.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        norm = normalize_array(x, self.stats)
        force_col = norm[:, None]
        bands = None
        if self.variant.tag != "A":
            bands = _sliding_band_magnitudes(norm, self.stft_window, 1, self.band_count)
        if self.variant.tag == "A":
            return [force_col]
        if self.variant.tag == "B":
            return [bands]
        if self.variant.tag == "C":
            return [np.concatenate([bands, force_col], axis=1)]
        return [force_col, bands]

    def _coerce_streams(self, features) -> list[np.ndarray]:
        if isinstance(features, np.ndarray):
            streams = [features]
        else:
            streams = [np.asarray(s, dtype=np.float64) for s in features]
        if len(streams) != self.variant.n_streams:
            raise ValueError(
                f"expected {self.variant.n_streams} feature stream(s), got {len(streams)}"
            )
        n = streams[0].shape[0]
        for s, dim in zip(streams, self.variant.stream_dims):
            if s.ndim != 2 or s.shape != (n, dim):
                raise ValueError(
                    f"feature dimension mismatch: expected (n, {dim}), got {s.shape}"
                )
        return streams

    # -- forward/backward ---------------------------------------------

    def _forward(self, streams: list[np.ndarray]):
        caches = [nn.lstm_forward_cache(s, p) for s, p in zip(streams, self.lstms)]
        hcat = np.concatenate([c.h_all[1:] for c in caches], axis=1)
        logits = hcat @ self.head.w.T + self.head.b
        probs = nn.softmax(logits)
        return caches, hcat, probs

    def predict(self, features) -> Prediction:
        """Per-step probability of instability plus 0.5-threshold flags.

        Ties at the threshold resolve to unstable (the fail-safe side).
        """
        streams = self._coerce_streams(features)
        _, _, probs = self._forward(streams)
        p_unstable = probs[:, CLASS_UNSTABLE]
        return Prediction(p_unstable=p_unstable, unstable=p_unstable >= self.threshold)

    def predict_samples(self, samples: np.ndarray) -> Prediction:
        return self.predict(self.featurize(samples))

    def _supervised_steps(self, n: int) -> np.ndarray:
        if self.loss_mode == "last-step":
            return np.array([n - 1])
        return np.arange(n)

    def loss(self, features, labels_unstable: np.ndarray) -> float:
        streams = self._coerce_streams(features)
        y = np.asarray(labels_unstable, dtype=np.int64)
        _, _, probs = self._forward(streams)
        sup = self._supervised_steps(probs.shape[0])
        p_true = probs[sup, y[sup]]
        return float(np.mean(-np.log(np.maximum(p_true, 1e-12))))

    def loss_and_grads(self, features, labels_unstable: np.ndarray):
        """Mean cross-entropy over supervised steps and its exact gradient."""
        streams = self._coerce_streams(features)
        y = np.asarray(labels_unstable, dtype=np.int64)
        caches, hcat, probs = self._forward(streams)
        n = probs.shape[0]
        sup = self._supervised_steps(n)
        p_true = probs[sup, y[sup]]
        loss = float(np.mean(-np.log(np.maximum(p_true, 1e-12))))

        d_logits = np.zeros_like(probs)
        d_logits[sup] = probs[sup]
        d_logits[sup, y[sup]] -= 1.0
        d_logits[sup] /= sup.size

        grads: dict[str, np.ndarray] = {
            "fc.w": d_logits.T @ hcat,
            "fc.b": d_logits.sum(axis=0),
        }
        d_hcat = d_logits @ self.head.w
        offset = 0
        for idx, (cache, params) in enumerate(zip(caches, self.lstms)):
            hd = params.hidden_dim
            lstm_grads = nn.lstm_backward(params, cache, d_hcat[:, offset : offset + hd])
            for gname, g in lstm_grads.items():
                grads[f"lstm{idx}.{gname}"] = g
            offset += hd
        return loss, grads

    # -- parameter plumbing -------------------------------------------

    def param_dict(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for idx, p in enumerate(self.lstms):
            for gname, arr in p.arrays().items():
                out[f"lstm{idx}.{gname}"] = arr
        out["fc.w"] = self.head.w
        out["fc.b"] = self.head.b
        return out

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for idx, p in enumerate(self.lstms):
            for gname in p.arrays():
                setattr(p, gname, params[f"lstm{idx}.{gname}"])
        self.head.w = params["fc.w"]
        self.head.b = params["fc.b"]

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.param_dict().items()}


def build_model(variant, config: TrainConfig, seed: int | None = None) -> GraspModel:
    return GraspModel.build(variant, config, seed)


# -- training ----------------------------------------------------------


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    val_success: float | None = None


def _window_success(model: GraspModel, feats, y: np.ndarray) -> tuple[int, int]:
    pred = model.predict(feats)
    ref_unstable = y.astype(bool)
    return int(np.sum(pred.unstable == ref_unstable)), int(y.size)


def train(
    model: GraspModel,
    windows,
    config: TrainConfig,
    val_windows=None,
) -> list[EpochRecord]:
    """Seeded-shuffled window iteration, one Adam step per window.

    Windows must carry ``samples`` and stable-flag ``labels`` (see
    graspslip.data.LabeledWindow). Features are derived once up front from
    the model's frozen stats. When validation windows are given, training
    stops after ``early_stop_patience`` epochs without a success-rate
    improvement and the best parameters are restored.
    """
    windows = list(windows)
    if not windows:
        raise ValueError("no training windows")
    feats = [model.featurize(w.samples) for w in windows]
    ys = [(~np.asarray(w.labels, dtype=bool)).astype(np.int64) for w in windows]
    counts = np.bincount(np.concatenate(ys), minlength=2)
    if counts.min() == 0:
        raise ValueError("training windows must contain both classes")

    val_feats = val_ys = None
    if val_windows is not None:
        val_windows = list(val_windows)
        val_feats = [model.featurize(w.samples) for w in val_windows]
        val_ys = [(~np.asarray(w.labels, dtype=bool)).astype(np.int64) for w in val_windows]

    opt = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.adam_eps)
    rng = np.random.default_rng(config.seed)
    history: list[EpochRecord] = []
    best_success = -1.0
    best_params = None
    stale = 0

    for epoch in range(config.epochs):
        order = rng.permutation(len(windows))
        losses = np.empty(len(windows))
        for step, wi in enumerate(order):
            loss, grads = model.loss_and_grads(feats[wi], ys[wi])
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"diverged: non-finite loss at epoch {epoch}, step {step}"
                )
            if config.clip_norm:
                grads = nn.clip_gradients(grads, config.clip_norm)
            new_params, opt = nn.adam_step(model.param_dict(), grads, opt)
            model.set_params(new_params)
            losses[step] = loss

        record = EpochRecord(epoch=epoch, mean_loss=float(losses.mean()))
        if val_feats is not None:
            hit = tot = 0
            for f, y in zip(val_feats, val_ys):
                h, t = _window_success(model, f, y)
                hit += h
                tot += t
            record.val_success = hit / tot
            if record.val_success > best_success:
                best_success = record.val_success
                best_params = model.copy_params()
                stale = 0
            else:
                stale += 1
        history.append(record)
        if val_feats is not None and stale >= config.early_stop_patience:
            break

    if best_params is not None:
        model.set_params(best_params)
    return history


# -- checkpoint container ------------------------------------------------
#
# Layout: magic, u32 version, u32 header length, JSON header (kind, dims,
# feature config, array manifest), then each array as little-endian f64 in
# manifest order, then the sha256 of everything before it.

CKPT_MAGIC = b"GSLPCKPT"
CKPT_VERSION = 1

_KIND_LOADERS: dict[str, "object"] = {}


def register_checkpoint_kind(kind: str, loader) -> None:
    """loader(header, arrays) -> model; used by the baseline classifiers."""
    _KIND_LOADERS[kind] = loader


class CheckpointError(ValueError):
    pass


def write_blob(path, header: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    manifest = [{"name": n, "shape": list(a.shape)} for n, a in arrays]
    header = dict(header, arrays=manifest)
    meta = json.dumps(header, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    payload = CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(meta)) + meta + body
    digest = sha256_bytes(payload).encode("ascii")
    atomic_write_bytes(path, payload + digest)


def read_blob(path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(CKPT_MAGIC) + 8 + 64 or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CheckpointError("not a checkpoint file")
    payload, digest = raw[:-64], raw[-64:]
    if sha256_bytes(payload).encode("ascii") != digest:
        raise CheckpointError("digest mismatch: checkpoint corrupted")
    off = len(CKPT_MAGIC)
    version, meta_len = struct.unpack_from("<II", payload, off)
    if version != CKPT_VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off += 8
    header = json.loads(payload[off : off + meta_len].decode("utf-8"))
    off += meta_len
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
        off += count * 8
    if off != len(payload):
        raise CheckpointError("trailing bytes after parameter data")
    return header, arrays


def save_checkpoint(model, path) -> None:
    """Serialize a zoo model (or registered baseline) deterministically."""
    if isinstance(model, GraspModel):
        header = {
            "kind": "variant",
            "variant": model.variant.tag,
            "hidden_dim": model.hidden_dim,
            "stft_window": model.stft_window,
            "band_count": model.band_count,
            "loss_mode": model.loss_mode,
            "threshold": model.threshold,
            "norm_stats": None
            if model.stats is None
            else {"min": model.stats.min_value, "max": model.stats.max_value},
        }
        arrays = sorted(model.param_dict().items())
        write_blob(path, header, arrays)
        return
    payload = getattr(model, "checkpoint_payload", None)
    if payload is None:
        raise CheckpointError(f"cannot checkpoint object of type {type(model).__name__}")
    header, arrays = payload()
    write_blob(path, header, arrays)


def load_checkpoint(path):
    header, arrays = read_blob(path)
    kind = header.get("kind")
    if kind == "variant":
        variant = get_variant(header["variant"])
        hd = int(header["hidden_dim"])
        lstms = []
        for idx in range(variant.n_streams):
            fields = {g: arrays[f"lstm{idx}.{g}"] for g in
                      ("w_i", "w_f", "w_o", "w_g", "b_i", "b_f", "b_o", "b_g")}
            lstms.append(LstmParams(**fields))
        head = FcHead(w=arrays["fc.w"], b=arrays["fc.b"])
        stats = header.get("norm_stats")
        model = GraspModel(
            variant=variant,
            lstms=lstms,
            head=head,
            stats=None if stats is None else NormStats(stats["min"], stats["max"]),
            stft_window=int(header["stft_window"]),
            band_count=int(header["band_count"]),
            loss_mode=header["loss_mode"],
            threshold=float(header["threshold"]),
        )
        if model.hidden_dim != hd:
            raise CheckpointError("hidden dim mismatch in checkpoint")
        return model
    if kind in _KIND_LOADERS:
        return _KIND_LOADERS[kind](header, arrays)
    # Baseline kinds register themselves on import.
    import graspslip.baselines  # noqa: F401

    if kind in _KIND_LOADERS:
        return _KIND_LOADERS[kind](header, arrays)
    raise CheckpointError(f"unknown checkpoint kind {kind!r}")

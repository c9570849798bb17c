"""End-to-end pipelines: generate, preprocess, encode, quantize, frame, decode
and evaluate; plus bit-budget sweeps and CSV/JSON reports.

A pipeline is described by a JSON-serializable :class:`PipelineConfig`. The
network's feature length is derived from the bit budget so that mask bits
plus payload bits never exceed it. Scheme ``raw`` sends the (cut) channel
coefficients as float32 and uses no network; with no path cutting it is the
identity pipeline.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bitstream import decode_frame, encode_frame, feedback_bit_count
from .channel import ChannelConfig, desk_config, nmse_per_sample, synth_dataset
from .nn import Network, NetworkSpec, TrainConfig, finetune_decoder, train
from .preprocess import PreprocessConfig, Preprocessor, augment
from .quantize import (Codebook, OffsetConfig, ScalarBank, allocate_path_bits, distortion_table,
                       fit_bank, offsetnet_train, vq_decode, vq_encode, vq_fit, write_quantizer)

log = logging.getLogger(__name__)

NMSE_THRESHOLD = 0.1
SCALAR_SCHEMES = ("uniform", "mulaw", "alaw", "adaptive")
SCHEMES = SCALAR_SCHEMES + ("vector", "path_level", "raw")
# frame scheme ids; both companding laws share id 1
FRAME_SCHEME = {"uniform": 0, "mulaw": 1, "alaw": 1, "adaptive": 2, "vector": 3,
                "path_level": 4, "raw": 5}
CSV_COLUMNS = ("config_digest", "scheme", "feedback_bits", "nmse_mean", "nmse_std", "pass", "wall_s")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class QuantConfig:
    scheme: str = "adaptive"
    bits: int = 3  # per feature; per sub-vector for ``vector``; mean bits for ``path_level``
    sub_dim: int = 2
    b_max: int = 6  # largest per-path width considered by ``path_level``
    per_feature: bool = True  # adaptive: one Lloyd-Max quantizer per feature
    allocate: bool = False  # adaptive: greedy per-feature widths filling the budget
    finetune_epochs: int = 60  # decoder retraining on dequantized features
    finetune_lr: float = 3e-4
    offsetnet: bool = False
    offset_epochs: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if self.scheme != "raw" and not 1 <= self.bits <= 16:
            raise ConfigError(f"bits must be in [1, 16], got {self.bits}")
        if self.sub_dim < 1 or self.b_max < 1:
            raise ConfigError("sub_dim and b_max must be >= 1")


_NET_KEYS = {"mode", "encoder_widths", "decoder_widths", "block", "split_layers", "split_fraction",
             "activation", "rezero", "feature_len"}


@dataclass(frozen=True)
class PipelineConfig:
    channel: ChannelConfig = field(default_factory=desk_config)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    # NetworkSpec fields except the derived shapes; None means no network (raw scheme)
    network: dict | None = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    quant: QuantConfig = field(default_factory=QuantConfig)
    budget: int = 512
    seeds: tuple = (0,)
    out_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if self.network is not None:
            unknown = set(self.network) - _NET_KEYS
            if unknown:
                raise ConfigError(f"unknown network keys: {sorted(unknown)}")
        if (self.network is None) != (self.quant.scheme == "raw"):
            raise ConfigError("scheme 'raw' is exactly the network-free pipeline")

    def to_dict(self) -> dict:
        net = None
        if self.network is not None:
            net = {k: list(v) if isinstance(v, tuple) else v for k, v in self.network.items()}
        return {
            "channel": self.channel.to_dict(),
            "preprocess": self.preprocess.to_dict(),
            "network": net,
            "train": self.train.to_dict(),
            "quant": dataclasses.asdict(self.quant),
            "budget": self.budget,
            "seeds": list(self.seeds),
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        kw = {}
        if "channel" in d:
            kw["channel"] = ChannelConfig.from_dict(d["channel"])
        if "preprocess" in d:
            kw["preprocess"] = PreprocessConfig.from_dict(d["preprocess"])
        if "network" in d:
            net = d["network"]
            kw["network"] = None if net is None else {
                k: tuple(v) if isinstance(v, list) else v for k, v in net.items()}
        if "train" in d:
            kw["train"] = TrainConfig(**d["train"])
        if "quant" in d:
            kw["quant"] = QuantConfig(**d["quant"])
        for key in ("budget", "seeds", "out_dir"):
            if key in d:
                kw[key] = d[key]
        unknown = set(d) - set(kw)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kw)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def digest(self) -> str:
        """Hash of the canonical JSON, output location excluded."""
        d = self.to_dict()
        d.pop("out_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def desk_pipeline(**overrides) -> PipelineConfig:
    """The desk acceptance pipeline: top-6 path cut, shallow joint network,
    per-feature adaptive 3-bit quantization, 512-bit budget, three seeds."""
    kw = dict(
        channel=desk_config(),
        preprocess=PreprocessConfig(path_rule="topk", k=6),
        network=dict(mode="joint", encoder_widths=(), decoder_widths=(), activation="identity"),
        train=TrainConfig(epochs=400, batch_size=64, lr=3e-3, lr_decay=0.995),
        quant=QuantConfig("adaptive", bits=3),
        budget=512,
        seeds=(0, 1, 2),
    )
    kw.update(overrides)
    return PipelineConfig(**kw)


def identity_pipeline(channel: ChannelConfig | None = None, k: int | None = None) -> PipelineConfig:
    """Network-free pipeline sending float32 coefficients; ``k`` adds a top-k cut."""
    channel = channel or desk_config()
    pre = PreprocessConfig() if k is None else PreprocessConfig(path_rule="topk", k=k)
    n_keep = channel.n_paths if k is None else k
    budget = channel.n_paths + n_keep * channel.n_tx * channel.n_rx * 64
    return PipelineConfig(channel=channel, preprocess=pre, network=None,
                          quant=QuantConfig("raw"), budget=budget)


# ---------------------------------------------------------------------------
# feature layout

@dataclass(frozen=True)
class Layout:
    feature_len: int  # per network unit (the whole sample in joint mode, a slot otherwise)
    n_features: int  # total features per sample
    soft_bits: int  # soft quantizer width used during training
    payload_bits: int  # bits available after the mask


def plan(config: PipelineConfig, n_slots: int) -> Layout:
    """Derive the feature length from the budget; raise before any training
    if the scheme cannot fit."""
    q, n_paths = config.quant, config.channel.n_paths
    avail = config.budget - n_paths
    if avail < 0:
        raise ConfigError(f"budget {config.budget} cannot even carry the {n_paths}-bit mask")
    if q.scheme == "raw":
        n_keep = config.preprocess.k if config.preprocess.path_rule == "topk" else n_paths
        need = n_keep * config.channel.n_tx * config.channel.n_rx * 64
        if need > avail:
            raise ConfigError(f"raw scheme needs {need} payload bits, budget leaves {avail}")
        return Layout(0, 0, 0, need)
    net = config.network
    per_path = net.get("mode", "joint") == "per_path"
    units = n_slots if per_path else 1
    if q.scheme == "path_level" and not per_path:
        raise ConfigError("path_level allocation needs per_path mode (one feature group per path)")
    if "feature_len" in net:
        flen = int(net["feature_len"])
    elif q.scheme == "vector":
        flen = avail // (q.bits * units) * q.sub_dim
    else:
        flen = avail // (q.bits * units)
    if flen < 1:
        raise ConfigError(f"budget {config.budget} leaves no room for features with scheme {q.scheme}")
    n_feat = flen * units
    if q.scheme == "vector":
        if flen % q.sub_dim:
            raise ConfigError(f"feature length {flen} not divisible by sub_dim {q.sub_dim}")
        payload = n_feat // q.sub_dim * q.bits
        soft = max(1, round(q.bits / q.sub_dim))
    else:
        payload = n_feat * q.bits
        soft = q.bits
    if payload > avail and not (q.scheme == "adaptive" and q.allocate):
        raise ConfigError(f"{n_feat} features need {payload} payload bits, budget leaves {avail}")
    return Layout(flen, n_feat, min(soft, 16), min(payload, avail))


# ---------------------------------------------------------------------------
# data and loss

_DATA_CACHE: dict = {}


def load_data(channel: ChannelConfig):
    """Train and test channel tensors (complex128), cached per config."""
    key = json.dumps(channel.to_dict(), sort_keys=True)
    if key not in _DATA_CACHE:
        tr = synth_dataset(channel, "train")
        te = synth_dataset(channel, "test", tr.stats)
        _DATA_CACHE[key] = (tr.samples.astype(np.complex128), te.samples.astype(np.complex128))
    return _DATA_CACHE[key]


def _energy(H):
    return np.sum(np.abs(H) ** 2, axis=(1, 2, 3))


def nmse_loss(pp: Preprocessor, state: dict):
    """Per-sample NMSE on denormalized channels, averaged over the batch.

    ``state`` holds the current training tensors ``H``, masks ``m`` and
    energies ``E`` (replaced when augmentation refreshes the data).
    """

    def loss(y, idx):
        H, m, e = state["H"][idx], state["m"][idx], state["E"][idx]
        R = pp.inverse(y, m) - H
        per = np.sum(np.abs(R) ** 2, axis=(1, 2, 3)) / e
        G = 2.0 * R / (e[:, None, None, None] * len(idx))
        return float(per.mean()), pp.inverse_adjoint(G, m)

    return loss


# ---------------------------------------------------------------------------
# codecs: features <-> payload indices

class ScalarCodec:
    def __init__(self, bank: ScalarBank):
        self.bank = bank
        self.widths = bank.widths[bank.widths > 0]

    def encode(self, f):
        return self.bank.sent(self.bank.quantize(f))

    def decode(self, idx):
        return self.bank.dequantize(self.bank.received(idx))

    @property
    def artifact(self):
        return self.bank


class VectorCodec:
    def __init__(self, codebook: Codebook, n_features: int):
        self.codebook = codebook
        self.widths = np.full(n_features // codebook.sub_dim, codebook.bits)

    def encode(self, f):
        return vq_encode(f, self.codebook)

    def decode(self, idx):
        return vq_decode(idx, self.codebook)

    @property
    def artifact(self):
        return self.codebook


def codec_from_artifact(q, n_features: int):
    if isinstance(q, Codebook):
        return VectorCodec(q, n_features)
    return ScalarCodec(q)


def _dequantized(codec, f):
    return codec.decode(codec.encode(f))


def _path_level_bank(q: QuantConfig, ftr, net, layout, loss, n_slots, n_probe=500):
    """Per-slot adaptive quantizers with greedy per-slot widths.

    The table entry for slot ``k`` at ``b`` bits is the training NMSE when only
    that slot's features are quantized to ``b`` bits.
    """
    flen = layout.feature_len
    slot_of = np.repeat(np.arange(n_slots), flen)
    probe = np.arange(min(n_probe, len(ftr)))
    tables = np.zeros((n_slots, q.b_max + 1))
    for k in range(n_slots):
        cols = slot_of == k
        for b in range(q.b_max + 1):
            bank = fit_bank(ftr[:, cols], "adaptive", b)
            f = ftr[probe].copy()
            f[:, cols] = bank.dequantize(bank.quantize(f[:, cols]))
            tables[k, b] = loss(net.decode(f), probe)[0]
    tables = np.minimum.accumulate(tables, axis=1)
    bits = allocate_path_bits(tables, layout.payload_bits // flen)
    return fit_bank(ftr, "adaptive", bits, slot_of), tables


def fit_codec(q: QuantConfig, ftr, layout: Layout, seed: int, net=None, loss=None, n_slots=1,
              payload_bits: int | None = None):
    """Fit the scheme's quantizer on training features."""
    payload_bits = layout.payload_bits if payload_bits is None else payload_bits
    n_feat = ftr.shape[1]
    if q.scheme in ("uniform", "mulaw", "alaw"):
        return ScalarCodec(fit_bank(ftr, q.scheme, q.bits))
    if q.scheme == "adaptive":
        groups = np.arange(n_feat) if q.per_feature or q.allocate else None
        if q.allocate:
            b_max = min(16, q.b_max)
            tables = np.stack([distortion_table(ftr[:, j], b_max) for j in range(n_feat)])
            bits = allocate_path_bits(tables, payload_bits)
            return ScalarCodec(fit_bank(ftr, "adaptive", bits, groups))
        return ScalarCodec(fit_bank(ftr, "adaptive", q.bits, groups))
    if q.scheme == "vector":
        return VectorCodec(vq_fit(ftr, q.sub_dim, q.bits, seed), n_feat)
    if q.scheme == "path_level":
        bank, _ = _path_level_bank(q, ftr, net, layout, loss, n_slots)
        return ScalarCodec(bank)
    raise ConfigError(f"scheme {q.scheme!r} has no feature codec")


# ---------------------------------------------------------------------------
# raw float32 transport

def raw_indices(coeffs) -> np.ndarray:
    """float32 (re, im) bit patterns of complex coefficients as 16-bit halves."""
    c = np.asarray(coeffs).astype(np.complex64).ravel()
    words = np.stack([c.real, c.imag], axis=-1).astype(">f4").view(">u4").ravel().astype(np.int64)
    return np.stack([words >> 16, words & 0xFFFF], axis=-1).ravel()


def raw_coeffs(indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
    words = ((idx[:, 0] << 16) | idx[:, 1]).astype(">u4")
    ri = words.view(">f4").astype(np.float32).reshape(-1, 2)
    return (ri[:, 0] + 1j * ri[:, 1]).astype(np.complex64)


# ---------------------------------------------------------------------------
# frames

def encode_frames(scheme: str, masks, payload, widths) -> list:
    sid = FRAME_SCHEME[scheme]
    return [encode_frame(sid, m, p, widths) for m, p in zip(masks, payload)]


def decode_frames(frames, widths, n_paths: int):
    decoded = [decode_frame(fr, n_paths) for fr in frames]
    masks = np.stack([d.mask for d in decoded])
    payload = np.stack([d.indices(widths) for d in decoded])
    bits = np.array([feedback_bit_count(d) for d in decoded])
    return masks, payload, bits


# ---------------------------------------------------------------------------
# report rows

@dataclass
class ReportRow:
    config_digest: str
    scheme: str
    feedback_bits: int
    nmse_mean: float
    nmse_std: float
    passed: bool
    wall_s: float
    per_seed: list = field(default_factory=list)
    per_sample: list = field(default_factory=list)  # per seed, per test sample
    config: dict = field(default_factory=dict)
    error: str | None = None
    extra: dict = field(default_factory=dict)

    def csv_row(self) -> dict:
        return {"config_digest": self.config_digest, "scheme": self.scheme,
                "feedback_bits": self.feedback_bits, "nmse_mean": repr(float(self.nmse_mean)),
                "nmse_std": repr(float(self.nmse_std)), "pass": int(self.passed),
                "wall_s": f"{self.wall_s:.3f}"}

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _row(config, scheme, bits, per_seed, per_sample, t0, extra=None) -> ReportRow:
    per_seed = [float(v) for v in per_seed]
    mean = float(np.mean(per_seed))
    return ReportRow(config.digest(), scheme, int(bits), mean, float(np.std(per_seed)),
                     bool(mean <= NMSE_THRESHOLD), time.perf_counter() - t0, per_seed,
                     [list(map(float, p)) for p in per_sample], config.to_dict(), None, extra or {})


def write_report(rows, csv_path=None, json_path=None) -> None:
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r.csv_row())
    if json_path is not None:
        Path(json_path).write_text(json.dumps([r.to_dict() for r in rows], indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# pipeline execution

def _run_raw(config: PipelineConfig, t0) -> ReportRow:
    _, Hte = load_data(config.channel)
    pp = Preprocessor(config.preprocess, *config.channel.shape)
    masks = pp.masks(Hte)
    n_keep = int(masks[0].sum())
    widths = np.full(n_keep * config.channel.n_tx * config.channel.n_rx * 4, 16)
    payload = [raw_indices(h[m]) for h, m in zip(Hte, masks)]
    frames = encode_frames("raw", masks, payload, widths)
    rmask, rpay, bits = decode_frames(frames, widths, config.channel.n_paths)
    rec = np.zeros_like(Hte)
    for i in range(len(Hte)):
        rec[i][rmask[i]] = raw_coeffs(rpay[i]).reshape(-1, config.channel.n_tx, config.channel.n_rx)
    per = nmse_per_sample(rec, Hte)
    return _row(config, "raw", bits[0], [per.mean()], [per], t0)


@dataclass
class TrainedModel:
    """Everything the two link ends share after training one seed."""

    net: Network
    pp: Preprocessor
    layout: Layout
    seed: int
    train_losses: list


def train_model(config: PipelineConfig, seed: int) -> tuple[TrainedModel, dict]:
    Htr, _ = load_data(config.channel)
    pp = Preprocessor(config.preprocess, *config.channel.shape).fit(Htr)
    layout = plan(config, pp.n_slots)
    x, _, mtr = pp.forward(Htr)
    spec = NetworkSpec(n_slots=pp.n_slots, slot_in=pp.input_width, slot_out=pp.output_width,
                       feature_len=layout.feature_len, quant_bits=layout.soft_bits,
                       **{k: v for k, v in config.network.items() if k != "feature_len"})
    net = Network(spec, seed)
    state = {"H": Htr, "m": mtr, "E": _energy(Htr)}
    loss = nmse_loss(pp, state)
    flags = config.preprocess.augment
    refresh = None
    if any(dataclasses.astuple(flags)):
        def refresh(epoch, rng):
            H = np.stack([augment(h, [seed, epoch, i], flags, config.preprocess.augment_p)
                          for i, h in enumerate(Htr)])
            xa, _, ma = pp.forward(H)
            state.update(H=H, m=ma, E=_energy(H))
            return xa
    tc = dataclasses.replace(config.train, seed=seed)
    result = train(net, x, loss, tc, quantize=layout.soft_bits > 0, refresh=refresh)
    state.update(H=Htr, m=mtr, E=_energy(Htr))
    return TrainedModel(net, pp, layout, seed, result.losses), {"x": x, "loss": loss}


def _snapshot(net):
    return [v.copy() for _, v, _ in net.parameters()]


def _restore(net, snap):
    for (_, v, _), s in zip(net.parameters(), snap):
        v[...] = s


def evaluate(model: TrainedModel, config: PipelineConfig, codec, ctx: dict, offset=None):
    """Encode the test split to frames, decode them and score. Returns
    ``(per-sample NMSE, feedback bits per frame)``."""
    _, Hte = load_data(config.channel)
    xt, _, mte = model.pp.forward(Hte)
    payload = codec.encode(model.net.encode(xt))
    frames = encode_frames(config.quant.scheme, mte, payload, codec.widths)
    rmask, rpay, bits = decode_frames(frames, codec.widths, config.channel.n_paths)
    f = codec.decode(rpay)
    if offset is not None:
        f = offset.forward(f)
    rec = model.pp.inverse(model.net.decode(f), rmask)
    return nmse_per_sample(rec, Hte), bits


def quantize_model(model: TrainedModel, config: PipelineConfig, ctx: dict, payload_bits=None):
    """Fit the quantizer, retrain the decoder on dequantized features and
    optionally fit an OffsetNet. Mutates the decoder."""
    q = config.quant
    net, x, loss = model.net, ctx["x"], ctx["loss"]
    ftr = net.encode(x)
    codec = fit_codec(q, ftr, model.layout, model.seed, net, loss, model.pp.n_slots, payload_bits)
    dq = _dequantized(codec, ftr)
    if q.finetune_epochs > 0:
        finetune_decoder(net, dq, loss, q.finetune_epochs, q.finetune_lr, seed=model.seed)
    offset = None
    if q.offsetnet:
        offset, _ = offsetnet_train(dq, ftr, OffsetConfig(epochs=q.offset_epochs, seed=model.seed))
    return codec, offset


def run_pipeline(config: PipelineConfig) -> ReportRow:
    """Train (per seed), quantize, frame, decode and score on the test split."""
    t0 = time.perf_counter()
    if config.quant.scheme == "raw":
        row = _run_raw(config, t0)
        _save_row(config, row)
        return row
    plan(config, Preprocessor(config.preprocess, *config.channel.shape).n_slots)
    per_seed, per_sample, bits = [], [], set()
    for seed in config.seeds:
        model, ctx = train_model(config, seed)
        codec, offset = quantize_model(model, config, ctx)
        per, fb = evaluate(model, config, codec, ctx, offset)
        per_seed.append(per.mean())
        per_sample.append(per)
        bits.update(fb.tolist())
        log.info("seed %d: NMSE %.4f, %d feedback bits", seed, per.mean(), fb[0])
        if config.out_dir:
            _save_artifacts(config, model, codec)
    if len(bits) != 1:
        raise RuntimeError(f"frames carry differing bit counts {sorted(bits)}")
    row = _row(config, config.quant.scheme, bits.pop(), per_seed, per_sample, t0)
    _save_row(config, row)
    return row


def _save_artifacts(config, model: TrainedModel, codec) -> None:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"pipeline": config.to_dict(), "seed": model.seed,
             "norm": [model.pp.stats.offset, model.pp.stats.scale]}
    model.net.save(out / f"model_s{model.seed}.csim", extra)
    write_quantizer(out / f"quant_s{model.seed}.csiq", codec.artifact)


def _save_row(config, row) -> None:
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report([row], out / "report.csv", out / "report.json")


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CSI_LAB_THREADS", "1")))
    except ValueError:
        return 1


def _failed_row(config: PipelineConfig, exc: Exception, t0) -> ReportRow:
    return ReportRow(config.digest(), config.quant.scheme, config.budget, float("nan"),
                     float("nan"), False, time.perf_counter() - t0, config=config.to_dict(),
                     error=f"{type(exc).__name__}: {exc}")


def sweep(configs, csv_path=None, json_path=None, threads: int | None = None) -> list:
    """One row per config, sorted by feedback bits. A failing row records its
    error and the sweep continues. ``CSI_LAB_THREADS`` caps parallel rows."""

    def one(cfg):
        t0 = time.perf_counter()
        try:
            return run_pipeline(cfg)
        except Exception as exc:  # noqa: BLE001 - recorded in the report
            log.warning("row %s failed: %s", cfg.digest(), exc)
            return _failed_row(cfg, exc, t0)

    threads = threads or _threads()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, configs))
    else:
        rows = [one(c) for c in configs]
    rows.sort(key=lambda r: r.feedback_bits)
    write_report(rows, csv_path, json_path)
    return rows


def budget_sweep(config: PipelineConfig, budgets, csv_path=None, json_path=None) -> list:
    """Train one encoder per seed at ``config.budget`` and re-quantize it at
    every budget with greedy per-feature widths (adaptive Lloyd-Max)."""
    budgets = sorted(int(b) for b in budgets)
    q = dataclasses.replace(config.quant, scheme="adaptive", allocate=True)
    base = dataclasses.replace(config, quant=dataclasses.replace(config.quant, allocate=False))
    results = {b: ([], [], set()) for b in budgets}
    errors = {}
    wall = {b: 0.0 for b in budgets}
    for seed in config.seeds:
        model, ctx = train_model(base, seed)
        snap = _snapshot(model.net)
        for b in budgets:
            t0 = time.perf_counter()
            cfg = dataclasses.replace(config, budget=b, quant=q)
            avail = b - config.channel.n_paths
            if avail < 1:
                errors[b] = f"ConfigError: budget {b} leaves no payload bits"
                continue
            _restore(model.net, snap)
            codec, offset = quantize_model(model, cfg, ctx, payload_bits=avail)
            per, fb = evaluate(model, cfg, codec, ctx, offset)
            results[b][0].append(per.mean())
            results[b][1].append(per)
            results[b][2].update(fb.tolist())
            wall[b] += time.perf_counter() - t0
    rows = []
    for b in budgets:
        cfg = dataclasses.replace(config, budget=b, quant=q)
        if b in errors:
            rows.append(_failed_row(cfg, ConfigError(errors[b]), time.perf_counter()))
            continue
        per_seed, per_sample, bits = results[b]
        row = _row(cfg, "adaptive", max(bits), per_seed, per_sample, time.perf_counter())
        row.wall_s = wall[b]
        rows.append(row)
    rows.sort(key=lambda r: r.feedback_bits)
    write_report(rows, csv_path, json_path)
    return rows

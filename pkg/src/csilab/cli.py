"""Command-line entry point: ``csilab <command> [flags]``.

Commands: generate, train, encode, decode, eval, sweep, gradcheck. Errors are
reported as ``error: <kind>: <message>`` on stderr with exit status 1; bad
flags print usage and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import struct
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bitstream import FrameError
from .channel import (ChannelConfig, Dataset, NormStats, desk_config, nmse_per_sample,
                      read_dataset, synth_dataset, write_dataset)
from .nn import grad_check, read_checkpoint
from .preprocess import Preprocessor
from .quantize import read_quantizer, write_quantizer

FRAMES_MAGIC = b"CSIF"
FRAMES_VERSION = 1
GRADCHECK_TOL = {"linear": 1e-8, "full": 1e-5}


class CliError(Exception):
    pass


# frames container: CSIF | version u32 | count u32 | (length u16 | frame bytes) * count

def write_frames(path, frames) -> None:
    parts = [FRAMES_MAGIC, struct.pack("<II", FRAMES_VERSION, len(frames))]
    for fr in frames:
        parts += [struct.pack("<H", len(fr)), fr]
    Path(path).write_bytes(b"".join(parts))


def read_frames(path) -> list:
    buf = Path(path).read_bytes()
    if buf[:4] != FRAMES_MAGIC:
        raise FrameError("frames file: bad magic")
    if len(buf) < 12:
        raise FrameError("frames file: truncated header")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != FRAMES_VERSION:
        raise FrameError(f"frames file: unsupported version {version}")
    pos, frames = 12, []
    for _ in range(count):
        if pos + 2 > len(buf):
            raise FrameError("frames file: truncated")
        (n,) = struct.unpack_from("<H", buf, pos)
        if pos + 2 + n > len(buf):
            raise FrameError("frames file: truncated")
        frames.append(buf[pos + 2:pos + 2 + n])
        pos += 2 + n
    if pos != len(buf):
        raise FrameError("frames file: trailing bytes")
    return frames


def _channel_from(path) -> ChannelConfig:
    if path is None:
        return desk_config()
    d = json.loads(Path(path).read_text())
    return ChannelConfig.from_dict(d.get("channel", d))


def _pipeline_from(path) -> harness.PipelineConfig:
    if path is None:
        return harness.desk_pipeline()
    return harness.PipelineConfig.load(path)


class _Codec:
    """Encoder and decoder ends rebuilt from a checkpoint and quantizer file."""

    def __init__(self, model_path, quant_path):
        self.net, extra = read_checkpoint(model_path)
        try:
            self.pipeline = harness.PipelineConfig.from_dict(extra["pipeline"])
            offset, scale = extra["norm"]
        except KeyError as exc:
            raise CliError(f"checkpoint lacks pipeline metadata ({exc})") from exc
        ch = self.pipeline.channel
        self.pp = Preprocessor(self.pipeline.preprocess, *ch.shape, stats=NormStats(offset, scale))
        self.codec = harness.codec_from_artifact(read_quantizer(quant_path),
                                                 self.net.spec.total_features)
        self.scheme = self.pipeline.quant.scheme

    def encode(self, H):
        x, _, masks = self.pp.forward(H)
        payload = self.codec.encode(self.net.encode(x))
        return harness.encode_frames(self.scheme, masks, payload, self.codec.widths)

    def decode(self, frames):
        masks, payload, bits = harness.decode_frames(frames, self.codec.widths,
                                                     self.pipeline.channel.n_paths)
        y = self.net.decode(self.codec.decode(payload))
        return self.pp.inverse(y, masks), bits


def _select(ds: Dataset, index):
    H = ds.samples.astype(np.complex128)
    return H if index is None else H[index:index + 1]


# ---------------------------------------------------------------------------
# commands

def cmd_generate(a) -> int:
    ch = _channel_from(a.config)
    if a.train_size is not None or a.test_size is not None:
        ch = ChannelConfig.from_dict({**ch.to_dict(),
                                      **({"n_train": a.train_size} if a.train_size else {}),
                                      **({"n_test": a.test_size} if a.test_size else {})})
    ds = synth_dataset(ch, a.split)
    write_dataset(ds, a.out)
    print(f"wrote {len(ds)} {a.split} samples of shape {ch.shape} to {a.out}")
    return 0


def cmd_train(a) -> int:
    cfg = _pipeline_from(a.config)
    if cfg.quant.scheme == "raw":
        raise CliError("scheme 'raw' has nothing to train")
    seed = cfg.seeds[0] if a.seed is None else a.seed
    model, ctx = harness.train_model(cfg, seed)
    codec, _ = harness.quantize_model(model, cfg, ctx)
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extra = {"pipeline": cfg.to_dict(), "seed": seed,
             "norm": [model.pp.stats.offset, model.pp.stats.scale]}
    model.net.save(out / "model.csim", extra)
    write_quantizer(out / "quant.csiq", codec.artifact)
    per, bits = harness.evaluate(model, cfg, codec, ctx)
    print(json.dumps({"model": str(out / "model.csim"), "quantizer": str(out / "quant.csiq"),
                      "feedback_bits": int(bits[0]), "test_nmse": float(per.mean()),
                      "final_train_loss": model.train_losses[-1]}))
    return 0


def cmd_encode(a) -> int:
    codec = _Codec(a.model, a.quantizer)
    frames = codec.encode(_select(read_dataset(a.dataset), a.index))
    write_frames(a.out, frames)
    print(f"wrote {len(frames)} frames to {a.out}")
    return 0


def cmd_decode(a) -> int:
    codec = _Codec(a.model, a.quantizer)
    H, bits = codec.decode(read_frames(a.frames))
    ch = codec.pipeline.channel
    write_dataset(Dataset(ch, H.astype(np.complex64), "test", codec.pp.stats), a.out)
    print(f"decoded {len(H)} frames ({int(bits[0])} feedback bits each) to {a.out}")
    return 0


def cmd_eval(a) -> int:
    ds = read_dataset(a.dataset)
    H = _select(ds, a.index)
    bits = None
    if a.identity:
        ch = ds.config
        masks = np.ones(H.shape[:2], dtype=bool)
        widths = np.full(H[0].size * 4, 16)
        payload = [harness.raw_indices(h) for h in H]
        frames = harness.encode_frames("raw", masks, payload, widths)
        _, rpay, fb = harness.decode_frames(frames, widths, ch.n_paths)
        rec = np.stack([harness.raw_coeffs(p).reshape(ch.shape) for p in rpay])
        bits = int(fb[0])
    elif a.recon:
        rec = read_dataset(a.recon).samples.astype(np.complex128)
        if len(rec) != len(H):
            raise CliError(f"reconstruction has {len(rec)} samples, dataset selection has {len(H)}")
    elif a.model and a.quantizer:
        codec = _Codec(a.model, a.quantizer)
        rec, fb = codec.decode(codec.encode(H))
        bits = int(fb[0])
    else:
        raise CliError("eval needs --identity, --recon, or --model with --quantizer")
    per = nmse_per_sample(rec, H)
    value = float(per.mean())
    if a.json:
        print(json.dumps({"nmse": value, "n_samples": len(per), "feedback_bits": bits,
                          "pass": value <= harness.NMSE_THRESHOLD}))
    else:
        print(f"NMSE {value:.6g}")
        if bits is not None:
            print(f"feedback bits {bits}")
    return 0


def cmd_sweep(a) -> int:
    csv_path, json_path = a.csv, a.json
    if a.budgets:
        cfg = _pipeline_from(a.config)
        budgets = [int(b) for b in a.budgets.split(",") if b.strip()]
        rows = harness.budget_sweep(cfg, budgets, csv_path, json_path)
    else:
        if not a.configs:
            raise CliError("sweep needs --budgets or one or more --configs")
        rows = harness.sweep([harness.PipelineConfig.load(p) for p in a.configs], csv_path, json_path)
    for r in rows:
        status = "error: " + r.error if r.error else ("pass" if r.passed else "fail")
        print(f"{r.feedback_bits:6d} bits  NMSE {r.nmse_mean:.4f} +- {r.nmse_std:.4f}  {status}")
    print(f"wrote {csv_path} and {json_path}")
    return 0


def cmd_gradcheck(a) -> int:
    report = grad_check(a.spec, a.seed)
    tol = GRADCHECK_TOL[a.spec] if a.tol is None else a.tol
    for name, err in sorted(report.max_rel_error.items()):
        print(f"{name:24s} {err:.3e}")
    print(f"{'input':24s} {report.input_rel_error:.3e}")
    ok = report.worst <= tol
    print(f"worst {report.worst:.3e} (tolerance {tol:g}, step {report.step:g}): {'ok' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csilab", description="CSI feedback compression lab")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a dataset file")
    g.add_argument("--config", help="channel or pipeline JSON (default: desk profile)")
    g.add_argument("--split", choices=("train", "test"), default="test")
    g.add_argument("--train-size", type=int)
    g.add_argument("--test-size", type=int)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a pipeline and write model + quantizer")
    t.add_argument("--config", help="pipeline JSON (default: desk acceptance pipeline)")
    t.add_argument("--seed", type=int)
    t.add_argument("--out-dir", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("encode", help="encode dataset samples to feedback frames")
    e.add_argument("--model", required=True)
    e.add_argument("--quantizer", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--index", type=int, help="encode one sample only")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="decode feedback frames to a reconstruction file")
    d.add_argument("--model", required=True)
    d.add_argument("--quantizer", required=True)
    d.add_argument("--frames", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    v = sub.add_parser("eval", help="report NMSE against a dataset")
    v.add_argument("--dataset", required=True)
    v.add_argument("--index", type=int)
    v.add_argument("--identity", action="store_true", help="lossless float32 feedback")
    v.add_argument("--recon", help="reconstruction file written by decode")
    v.add_argument("--model")
    v.add_argument("--quantizer")
    v.add_argument("--json", action="store_true")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="bit-budget sweep or config sweep")
    s.add_argument("--config", help="pipeline JSON for --budgets")
    s.add_argument("--budgets", help="comma-separated budgets, e.g. 256,384,512")
    s.add_argument("--configs", nargs="+", help="pipeline JSON files, one row each")
    s.add_argument("--csv", default="report.csv")
    s.add_argument("--json", default="report.json")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("gradcheck", help="finite-difference gradient check of a tiny network")
    c.add_argument("--spec", choices=tuple(GRADCHECK_TOL), default="full")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--tol", type=float)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError, RuntimeError) as exc:
        # DatasetFormatError, FrameError, CheckpointError, ... are ValueErrors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

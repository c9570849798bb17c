import csv

import pytest

from csilab.channel import desk_config
from csilab.cli import main, read_frames, write_frames
from csilab.harness import QuantConfig, desk_pipeline
from csilab.nn import TrainConfig
from csilab.bitstream import FrameError


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = desk_pipeline(channel=desk_config(n_train=150, n_test=20), train=TrainConfig(epochs=4),
                        quant=QuantConfig("adaptive", bits=3, finetune_epochs=1), seeds=(0,))
    (d / "c.json").write_text(cfg.to_json())
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_then_identity_eval(workdir, capsys):
    code, out, _ = run(capsys, "generate", "--config", workdir / "c.json", "--out", workdir / "d.bin")
    assert code == 0 and "20 test samples" in out
    code, out, _ = run(capsys, "eval", "--dataset", workdir / "d.bin", "--identity")
    assert code == 0
    assert out.splitlines()[0] == "NMSE 0"


def test_train_encode_decode_eval(workdir, capsys):
    if not (workdir / "d.bin").exists():
        run(capsys, "generate", "--config", workdir / "c.json", "--out", workdir / "d.bin")
    code, out, _ = run(capsys, "train", "--config", workdir / "c.json", "--out-dir", workdir / "m")
    assert code == 0 and '"feedback_bits": 510' in out
    m, q = workdir / "m" / "model.csim", workdir / "m" / "quant.csiq"
    code, out, _ = run(capsys, "encode", "--model", m, "--quantizer", q, "--dataset", workdir / "d.bin",
                       "--index", 2, "--out", workdir / "f.bin")
    assert code == 0 and len(read_frames(workdir / "f.bin")) == 1
    code, out, _ = run(capsys, "decode", "--model", m, "--quantizer", q, "--frames", workdir / "f.bin",
                       "--out", workdir / "r.bin")
    assert code == 0 and "510 feedback bits" in out
    code, out, _ = run(capsys, "eval", "--dataset", workdir / "d.bin", "--index", 2,
                       "--recon", workdir / "r.bin")
    assert code == 0 and out.startswith("NMSE ")
    # the direct model path gives the same number for that sample
    code, out2, _ = run(capsys, "eval", "--dataset", workdir / "d.bin", "--index", 2, "--model", m,
                        "--quantizer", q)
    assert out2.splitlines()[0] == out.splitlines()[0]


def test_sweep_budgets(workdir, capsys):
    csv_path = workdir / "s.csv"
    code, out, _ = run(capsys, "sweep", "--config", workdir / "c.json", "--budgets", "256,384,512",
                       "--csv", csv_path, "--json", workdir / "s.json")
    assert code == 0
    rows = list(csv.reader(open(csv_path)))
    assert len(rows) == 4 and rows[0][0] == "config_digest"


def test_gradcheck(capsys):
    code, out, _ = run(capsys, "gradcheck", "--spec", "full", "--seed", "0")
    assert code == 0 and out.rstrip().endswith("ok")
    code, out, _ = run(capsys, "gradcheck", "--spec", "linear")
    assert code == 0


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--dataset", "x", "--no-such-flag"])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_structured_failures(tmp_path, capsys):
    code, _, err = run(capsys, "eval", "--dataset", tmp_path / "missing.bin", "--identity")
    assert code == 1 and err.startswith("error: FileNotFoundError:")
    (tmp_path / "bad.bin").write_bytes(b"garbage!")
    code, _, err = run(capsys, "eval", "--dataset", tmp_path / "bad.bin", "--identity")
    assert code == 1 and err.startswith("error: DatasetFormatError:")
    code, _, err = run(capsys, "train", "--config", tmp_path / "missing.json", "--out-dir", tmp_path)
    assert code == 1


def test_frames_file(tmp_path):
    p = tmp_path / "f.bin"
    write_frames(p, [b"\xc5\x1fabc", b""])
    assert read_frames(p) == [b"\xc5\x1fabc", b""]
    p.write_bytes(p.read_bytes()[:-2])
    with pytest.raises(FrameError):
        read_frames(p)

import csv

import numpy as np
import pytest
from PIL import Image

from gunsr import config as config_mod
from gunsr.checkpoint import load_checkpoint
from gunsr.cli import EXIT_DATA, EXIT_USAGE, build_parser, main
from gunsr.config import ConfigError, RunConfig
from gunsr.metrics import psnr
from gunsr.resample import bicubic_resize


def texture(seed, h, w, colour=False):
    r = np.random.default_rng(seed)
    y, x = np.mgrid[0:h, 0:w]
    f = r.uniform(0.1, 0.4, 4)
    base = 0.5 + 0.2 * np.sin(f[0] * x + f[1] * y) + 0.15 * np.sign(np.sin(f[2] * x - f[3] * y))
    base = np.clip(base + 0.03 * r.random((h, w)), 0, 1)
    if colour:
        base = np.stack([base, np.roll(base, 3, axis=1), 1 - base], axis=-1)
    return (base * 255).round().astype(np.uint8)


@pytest.fixture
def corpus(tmp_path):
    train = tmp_path / "train"
    val = tmp_path / "val"
    train.mkdir()
    val.mkdir()
    for i in range(5):
        Image.fromarray(texture(i, 48, 56, colour=i % 2 == 0)).save(train / f"t{i}.png")
    for i in range(2):
        Image.fromarray(texture(10 + i, 40, 44)).save(val / f"v{i}.png")
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"""# toy run
scale = 2
steps = 2
depth = 2
channels = 4
lr_patch = 8
stride = 8
batch_size = 8
epochs_per_stage = 1
lr = 1e-5
train_dir = {train}
val_dir = {val}
""")
    return tmp_path


def test_config_defaults_and_dump_round_trip():
    c = RunConfig()
    assert (c.scale, c.n_steps, c.depth, c.channels, c.patch) == (4, 9, 4, 64, 12)
    assert c.batch_size == 64 and c.lr == 1e-4 and c.momentum == 0.9 and c.weight_decay == 1e-4
    assert c.lambdas == (1.2, 1.0, 0.8, 0.5, 0.0) and c.epochs_per_stage == 3
    assert c.train_config().decay_at == (2, 4)
    assert RunConfig(scale=2).n_steps == 5 and RunConfig(scale=3).patch == 16
    c2 = RunConfig(scale=3, lr=3e-5, stride=None, lambdas=(1.0, 0.0), train_dir="/x")
    assert RunConfig(**config_mod.loads(c2.dumps())) == c2


def test_config_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config key"):
        config_mod.loads("colour = red\n")
    with pytest.raises(ConfigError, match="line 2"):
        config_mod.loads("scale = 2\njust words\n")
    with pytest.raises(ConfigError):
        config_mod.loads("scale = two\n")
    with pytest.raises(ConfigError):
        config_mod.loads("scale = 5\n") and RunConfig(scale=5)
    with pytest.raises(ConfigError):
        RunConfig(scale=5)
    assert config_mod.loads("  # only a comment\n\nsteps =   # unset\n") == {"steps": None}
    assert config_mod.loads("augment = no\nlambdas = 1, 0.5, 0\n") == {"augment": False, "lambdas": (1.0, 0.5, 0.0)}


@pytest.mark.parametrize("cmd", [[], ["train"], ["sr"], ["eval"], ["schedule"], ["flops"], ["curriculum-stats"]])
def test_help_exits_zero(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(cmd + ["--help"])
    assert exc.value.code == 0


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == EXIT_USAGE
    assert main(["schedule", "10", "20", "--set", "nope=1"]) == EXIT_USAGE
    assert main(["train"]) == EXIT_USAGE


def test_schedule_command(capsys):
    assert main(["schedule", "100x100", "400x400", "9"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1:] == [f"step {i}: {v}x{v}" for i, v in enumerate([133, 166, 199, 232, 265, 298, 331, 364, 400], 1)]


def test_flops_command(capsys):
    for s in ("2", "3", "4"):
        assert main(["flops", "--scale", s]) == 0
        out = capsys.readouterr().out
        gun = float(out.split("gun")[1].split()[0])
        direct = float(out.split("direct")[1].split()[0])
        assert gun < direct


def test_curriculum_stats(corpus, capsys):
    assert main(["curriculum-stats", "--config", str(corpus / "run.cfg")]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 5
    assert main(["curriculum-stats", "--config", str(corpus / "run.cfg"), "--lambdas", "0.5,0"]) == 0
    rows = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("#")]
    assert len(rows) == 1 + 2


def test_train_sr_eval(corpus, capsys):
    ck = corpus / "m.gunw"
    log = corpus / "loss.csv"
    assert main(["train", "--config", str(corpus / "run.cfg"), "--checkpoint", str(ck), "--out", str(log)]) == 0
    m = load_checkpoint(ck)
    assert m.topology.steps == 2 and m.topology.channels == 4
    rows = list(csv.reader(open(log)))
    assert rows[0] == ["stage", "lambda", "epoch", "mean_loss", "val_psnr"] and len(rows) == 2 + 5
    assert (corpus / "m.gunw.cfg").exists()

    # replay from the dumped effective config is bit-exact
    ck2 = corpus / "m2.gunw"
    assert main(["train", "--config", str(corpus / "m.gunw.cfg"), "--checkpoint", str(ck2),
                 "--out", str(corpus / "loss2.csv")]) == 0
    assert ck.read_bytes() == ck2.read_bytes()
    assert log.read_bytes() == (corpus / "loss2.csv").read_bytes()

    src = corpus / "train" / "t0.png"
    out = corpus / "sr.png"
    assert main(["sr", "--checkpoint", str(ck), "--scale", "2", "--out", str(out), str(src)]) == 0
    assert Image.open(out).size == (112, 96) and Image.open(out).mode == "RGB"
    grey = corpus / "train" / "t1.png"
    assert main(["sr", "--checkpoint", str(ck), "--scale", "2", "--out", str(out), str(grey)]) == 0
    assert Image.open(out).mode == "L" and Image.open(out).size == (112, 96)

    capsys.readouterr()
    assert main(["sr", "--checkpoint", str(ck), "--scale", "3", "--out", str(out), str(src)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "scale 2" in err and "scale 3" in err

    report = corpus / "r.csv"
    assert main(["eval", "--checkpoint", str(ck), "--scale", "2", "--test-dir", str(corpus / "val"),
                 "--out", str(report)]) == 0
    rows = list(csv.reader(open(report)))
    assert [r[1] for r in rows[1:]] == ["bicubic"] * 3 + ["gun"] * 3


def test_lambda_override_single_stage(corpus, capsys):
    log = corpus / "one.csv"
    assert main(["train", "--config", str(corpus / "run.cfg"), "--lambdas", "0", "--out", str(log)]) == 0
    rows = list(csv.reader(open(log)))
    assert [r[0] for r in rows[1:]] == ["0", "1"]


def test_eval_bicubic_only_and_sentinel(corpus, capsys):
    report = corpus / "b.csv"
    assert main(["eval", "--scale", "2", "--test-dir", str(corpus / "val"), "--with-reference",
                 "--out", str(report)]) == 0
    rows = list(csv.reader(open(report)))
    assert rows[0] == ["image", "method", "scale", "psnr", "ssim"]
    bic = [r for r in rows[1:] if r[1] == "bicubic"]
    assert len(bic) == 2 + 1 and bic[-1][0] == "mean"
    hr = [r for r in rows[1:] if r[1] == "hr"]
    assert hr[0][3] == "inf" and float(hr[0][4]) == 1.0


def test_eval_quantized_flag(corpus, capsys):
    rows = {}
    for flag in ([], ["--quantized"]):
        out = corpus / f"q{len(flag)}.csv"
        assert main(["eval", "--scale", "2", "--test-dir", str(corpus / "val"), "--out", str(out)] + flag) == 0
        rows[bool(flag)] = [r for r in csv.reader(open(out)) if r[0] == "mean"][0]
    exact, rounded = float(rows[False][3]), float(rows[True][3])
    assert exact != rounded and abs(exact - rounded) < 0.2


def test_data_errors(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "x.png").write_bytes(b"junk")
    assert main(["eval", "--scale", "2", "--test-dir", str(empty)]) == EXIT_DATA
    assert main(["train", "--scale", "2", "--train-dir", str(empty)]) == EXIT_DATA
    assert main(["sr", "--checkpoint", str(tmp_path / "none.gunw"), "--scale", "2",
                 "--out", str(tmp_path / "o.png"), str(tmp_path / "in.png")]) == EXIT_DATA


def test_numeric_failure_exit_code(corpus, capsys):
    code = main(["train", "--config", str(corpus / "run.cfg"), "--set", "lr=1e9", "--set", "batch_size=2"])
    assert code == 3

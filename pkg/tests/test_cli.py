import numpy as np
import pytest

from hcast import cli, container, synthetic
from hcast.config import load_config
from hcast.dataset import load_table
from hcast.models import evaluate_mse


def write_config(tmp_path, extra="", n=500, table=None):
    table = synthetic.mixed_table(n) if table is None else table
    synthetic.write_fixture(table, tmp_path / "data.csv")
    text = ("data = data.csv\ncolumn = date:datetime\ncolumn = regime:categorical\ntargets = a\n"
            "T = 4\nH = 2\nkernel = 5\nmax_epochs = 8\ngan_epochs = 2\ndisc_hidden = 16,8\n"
            "output_dir = out\n" + extra)
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def run(*args):
    return cli.run(list(args))


def test_full_pipeline(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "out"
    assert run("prepare", "--config", cfg) == 0
    for name in ("prepared/train.csv", "prepared/val.csv", "prepared/test.csv", "prepared/normalization.txt",
                 "channel_map.txt", "windows.txt"):
        assert (out / name).is_file()
    assert run("train", "--config", cfg) == 0
    for name in ("model.hcast", "selection_report.csv", "gan_log.csv"):
        assert (out / name).is_file()
    assert len((out / "gan_log.csv").read_text().splitlines()) == 3
    assert run("evaluate", "--config", cfg, "--horizon-sweep", "4,8") == 0
    rows = (out / "results.csv").read_text().splitlines()
    assert rows[0] == cli.RESULTS_HEADER
    ours = [r.split(",") for r in rows[1:] if ",Persistence," not in r]
    assert [r[4] for r in ours] == ["1", "2"]
    assert run("forecast", "--config", cfg) == 0
    fc = load_table(str(out / "forecast.csv"), {"date": "datetime"})
    assert fc.N == 8 and np.isfinite(fc.column("a").values).all()
    data = load_table(str(tmp_path / "data.csv"), {"date": "datetime", "regime": "categorical"})
    assert np.all(np.diff(fc.timestamps) == np.timedelta64(3600, "s"))
    assert fc.timestamps[0] == data.timestamps[-1] + np.timedelta64(3600, "s")
    # denormalized: values live on the raw scale of the column
    raw = data.column("a").values
    assert raw.min() - 1 < fc.column("a").values.mean() < raw.max() + 1
    capsys.readouterr()
    assert run("report", "--config", cfg) == 0
    assert "selection_report.csv" in capsys.readouterr().out


def test_prepare_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    run("prepare", "--config", cfg)
    first = {p.name: p.read_bytes() for p in (tmp_path / "out" / "prepared").iterdir()}
    run("prepare", "--config", cfg)
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "out" / "prepared").iterdir()}


def test_skip_gan_equals_selection_winner(tmp_path):
    cfg = write_config(tmp_path)
    run("prepare", "--config", cfg)
    assert run("train", "--config", cfg, "--skip-gan") == 0
    gen, _, _ = container.load(str(tmp_path / "out" / "model.hcast"))
    report = (tmp_path / "out" / "selection_report.csv").read_text().splitlines()[1:]
    winner = min((r.split(",") for r in report), key=lambda r: float(r[1]))
    assert gen.kind == winner[0]
    conf = load_config(cfg)
    data = cli.load_prepared(conf)
    from hcast.pipeline import build_windows
    w = build_windows(data, conf.lookback, conf.T, conf.targets, conf.kernel)
    assert evaluate_mse(gen.model, *w.val) == float(winner[1])
    assert (tmp_path / "out" / "gan_log.csv").read_text().strip() == "epoch,L_D,L_G,L_GP,val_mse,best_so_far"


def test_model_and_candidate_flags(tmp_path):
    cfg = write_config(tmp_path)
    run("prepare", "--config", cfg)
    assert run("train", "--config", cfg, "--skip-gan", "--model", "NLinear") == 0
    assert container.load(str(tmp_path / "out" / "model.hcast"))[0].kind == "NLinear"
    assert run("train", "--config", cfg, "--skip-gan", "--candidates", "Linear,DLinear") == 0
    rows = (tmp_path / "out" / "selection_report.csv").read_text().splitlines()
    assert [r.split(",")[0] for r in rows[1:]] == ["Linear", "DLinear"]


def test_oracle_model_beats_persistence(tmp_path):
    t = np.arange(600)
    table = synthetic.table_from_arrays({"a": np.sin(2 * np.pi * t / 24)}, categorical={"regime": ["x"] * 600})
    cfg = write_config(tmp_path, "T = 1\nH = 1\nS = 24\nmax_epochs = 200\nlr = 0.01\n", table=table)
    run("prepare", "--config", cfg)
    run("train", "--config", cfg, "--skip-gan", "--model", "Linear")
    run("evaluate", "--config", cfg)
    rows = {r.split(",")[1]: float(r.split(",")[6]) for r in
            (tmp_path / "out" / "results.csv").read_text().splitlines()[1:]}
    assert rows["Linear"] < rows["Persistence"]


def test_direct_mode_trains_h_models(tmp_path):
    cfg = write_config(tmp_path, "mode = direct\n")
    run("prepare", "--config", cfg)
    assert run("train", "--config", cfg, "--skip-gan", "--model", "Linear") == 0
    assert (tmp_path / "out" / "model_1.hcast").is_file()
    assert run("evaluate", "--config", cfg) == 0
    assert run("forecast", "--config", cfg) == 0


def test_single_mode_forecast_emits_one_row(tmp_path):
    cfg = write_config(tmp_path, "T = 1\nH = 1\nmode = single\n")
    run("prepare", "--config", cfg)
    run("train", "--config", cfg, "--skip-gan")
    assert run("forecast", "--config", cfg) == 0
    assert len((tmp_path / "out" / "forecast.csv").read_text().splitlines()) == 2


def test_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path)
    (tmp_path / "data.csv").unlink()
    assert run("prepare", "--config", cfg) == 2
    assert "data.csv" in capsys.readouterr().err
    assert run("train", "--config", str(tmp_path / "none.cfg")) == 2
    cfg = write_config(tmp_path)
    run("prepare", "--config", cfg)
    assert run("evaluate", "--config", cfg) == 2  # no model yet
    run("train", "--config", cfg, "--skip-gan")
    assert run("evaluate", "--config", cfg, "--horizon-sweep", "6") == 2
    assert run("prepare", "--config", cfg, "--set", "kernel=4") == 2


def test_numerical_failure_exits_1(tmp_path, monkeypatch):
    from hcast.errors import TrainingDiverged
    cfg = write_config(tmp_path)
    run("prepare", "--config", cfg)

    def boom(*a, **k):
        raise TrainingDiverged("diverged", 3, 1)

    monkeypatch.setattr(cli, "train_gan", boom)
    assert run("train", "--config", cfg) == 1


def test_seed_and_normalization_flags(tmp_path):
    cfg = write_config(tmp_path)
    assert run("prepare", "--config", cfg, "--normalization", "zscore") == 0
    assert (tmp_path / "out" / "prepared" / "normalization.txt").read_text().startswith("mode = zscore")
    assert run("train", "--config", cfg, "--seed", "5", "--skip-gan", "--normalization", "zscore") == 0
    _, _, header = container.load(str(tmp_path / "out" / "model.hcast"))
    assert header["extra"]["seed"] == 5


def test_console_script_entry_point():
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0

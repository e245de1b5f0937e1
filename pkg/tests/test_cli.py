import json
import math

import pytest

from robust_reserve.cli import main
from robust_reserve.config import ConfigError, RunConfig, load_config, parse_config


def write(tmp_path, name, obj):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def parse_lines(text):
    return dict(ln.split(": ", 1) for ln in text.strip().splitlines())


@pytest.fixture
def bids(tmp_path):
    return write(tmp_path, "bids.csv", "bid_1\n0.2\n0.5\n0.8\n")


def test_price_examples(bids, capsys):
    assert main(["price", bids, "--lambda", "0.5"]) == 0
    assert main(["price", bids, "--lambda", "0"]) == 0
    assert capsys.readouterr().out.split() == ["0.5", "0.8"]


def test_price_errors(bids, tmp_path, capsys):
    assert main(["price", bids, "--lambda", "1.5"]) != 0
    assert "lambda exceeds bidders per profile" in capsys.readouterr().err
    bad = write(tmp_path, "bad.csv", "bid_1,bid_2\n0.1,0.2\n0.3,x\n")
    assert main(["price", bad, "--lambda", "0.5"]) != 0
    assert "row 3, column 2" in capsys.readouterr().err


def test_oracle_uniform(tmp_path, capsys):
    cfg = write(tmp_path, "u.json", {"profile": {"distribution": {"kind": "uniform"}}, "lambdas": [0.3]})
    assert main(["oracle", "--config", cfg, "--epsilon", "inf"]) == 0
    out = parse_lines(capsys.readouterr().out)
    assert float(out["clearing_price"]) == pytest.approx(0.7, abs=1e-9)
    assert float(out["eta"]) == pytest.approx(float(out["iid_quantile_eta"]), abs=1e-9)
    assert float(out["smoothed_reserve"]) == float(out["clearing_price"])


def test_oracle_zero_reserve_branch(tmp_path, capsys):
    cfg = write(tmp_path, "u.json", {"profile": {"distribution": {"kind": "uniform"}}, "lambdas": [0.8]})
    assert main(["oracle", "--config", cfg, "--epsilon", "0.1"]) == 0
    out = parse_lines(capsys.readouterr().out)
    assert float(out["kappa"]) > float(out["n_minus_lambda"])
    assert float(out["zeta"]) == 0.0 and float(out["dic_srcp"]) == 1.0


def test_config_errors_name_fields(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", {"profile": {"distribution": {"kind": "uniform", "hi": -1}}, "k": "many"})
    assert main(["oracle", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "profile.distribution.uniform" in err and "k:" in err
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(write(tmp_path, "broken.json", "{"))
    with pytest.raises(ConfigError, match="epsilons"):
        parse_config({"epsilons": []})
    with pytest.raises(ConfigError, match="unknown_key"):
        parse_config({"unknown_key": 1})


def test_config_defaults_and_inf():
    cfg = parse_config({"epsilons": [0.5, "inf"]})
    assert cfg.grid().epsilons == (0.5, math.inf)
    assert RunConfig().grid().k == 5000


def test_shipped_configs_load():
    one = load_config("configs/fig1.json").grid()
    two = load_config("configs/fig2.json").grid()
    assert one.profile.n == 1 and one.lambdas == (0.2, 0.4, 0.6, 0.8)
    assert two.profile.n == 2 and two.lambdas == (0.4, 0.8, 1.2, 1.6)
    assert len(one.epsilons) == len(two.epsilons) == 9


def test_sweep_command(tmp_path, capsys):
    cfg = write(
        tmp_path,
        "s.json",
        {"lambdas": [0.4], "epsilons": [2, "inf"], "k": 200, "repetitions": 2, "ic_samples": 200},
    )
    out = tmp_path / "made" / "here.csv"
    assert main(["sweep", "--config", cfg, "--out", str(out), "--seed", "5"]) == 0
    text = capsys.readouterr().out
    assert "wrote 4 rows" in text and "undominated lambdas" in text
    first = out.read_bytes()
    assert main(["sweep", "--config", cfg, "--out", str(out), "--seed", "5", "--jobs", "2"]) == 0
    assert out.read_bytes() == first
    assert "# master_seed 5" in out.read_text()


def test_sweep_uncreatable_directory(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write(tmp_path, "s.json", {"lambdas": [0.4], "epsilons": ["inf"], "k": 50, "repetitions": 2})
    assert main(["sweep", "--config", cfg, "--out", str(blocker / "x.csv")]) == 1
    assert "cannot create output directory" in capsys.readouterr().err


def test_simulate_writes_provenance(tmp_path, capsys):
    out = tmp_path / "sim.json"
    assert main(["simulate", "--mechanism", "srcp", "--lambda", "0.4", "--epsilon", "2", "--out", str(out)]) == 0
    rec = json.loads(out.read_text())
    assert rec["tool_version"] == "0.1.0" and rec["master_seed"] == 0 and len(rec["config_sha256"]) == 64
    assert rec["policy"].startswith("srcp,0.4,2.0,")
    assert 0.0 <= rec["match_rate"] <= 1.0


def test_validate_suite(capsys):
    assert main(["validate", "--trials", "20000"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_validate_catches_corrupted_eta(capsys):
    assert main(["validate", "--trials", "2000", "--corrupt-eta"]) == 1
    failed = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("FAIL")]
    assert failed and all("eta vs finite difference" in ln and "n=2" in ln for ln in failed)

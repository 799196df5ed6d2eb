import json
import subprocess
import sys

import pytest

from polarforge.cli import main
from polarforge.core import AVector


def run(*argv):
    return main([str(a) for a in argv])


def test_construct_bhattacharyya_example(tmp_path):
    out = tmp_path / "a.txt"
    assert run("construct", "-N", 8, "-k", 4, "--method", "bhattacharyya", "--design-epsilon", 0.5, "-o", out) == 0
    assert AVector.load(out).positions() == [4, 6, 7, 8]
    man = json.loads((tmp_path / "a.txt.manifest.json").read_text())
    assert man["command"] == "construct" and man["params"]["design_epsilon"] == 0.5
    assert man["outputs"] == [str(out.resolve())]


def test_construct_rm_full_rate(tmp_path):
    out = tmp_path / "rm.txt"
    assert run("construct", "-N", 8, "-k", 8, "--method", "rm", "-o", out) == 0
    assert AVector.load(out).bits.tolist() == [1] * 8


def test_construct_rejects_bad_length(tmp_path, capsys):
    assert run("construct", "-N", 6, "-k", 3, "--design-snr", 1, "-o", tmp_path / "x.txt") == 2
    assert "N must be a power of two" in capsys.readouterr().err


def test_construct_needs_one_design_parameter(tmp_path):
    assert run("construct", "-N", 8, "-k", 4, "-o", tmp_path / "x.txt") == 2
    assert run("construct", "-N", 8, "-k", 4, "--design-snr", 1, "--design-epsilon", 0.5, "-o", tmp_path / "x.txt") == 2


def test_unknown_flag_is_usage_error(tmp_path):
    assert run("construct", "--bogus", "-o", tmp_path / "x.txt") == 2


def _evolve(tmp_path, name, *extra):
    out = tmp_path / name
    args = ["evolve", "-N", 32, "-k", 16, "--channel", "awgn", "--snr-db", 2.0, "--decoder", "sc",
            "--min-errors", 20, "--max-frames", 4000, "--seed", 5, "-o", out, *extra]
    return run(*args), out


def test_evolve_zero_generations_returns_best_seed(tmp_path):
    from polarforge.channel import ChannelConfig
    from polarforge.core import CodeSpec
    from polarforge.decoder import DecoderConfig
    from polarforge.genalg import GenAlgConfig, FitnessEvaluator, initialize_population
    from polarforge.sim import StoppingRule

    rc, out = _evolve(tmp_path, "g0.txt", "--generations", 0, "--workers", 1)
    assert rc == 0
    cfg = GenAlgConfig(spec=CodeSpec.from_length(32, 16), snr_genalg=2.0, decoder=DecoderConfig("sc"),
                       stop=StoppingRule(20, 4000), seed=5)
    rng, seed = cfg.streams()
    pop = initialize_population(cfg, rng, FitnessEvaluator(cfg, seed))
    assert AVector.load(out) == pop.best().a
    assert len((tmp_path / "g0.txt.history.csv").read_text().splitlines()) == 2


def test_evolve_toy_bec_history_rows(tmp_path):
    out = tmp_path / "bec.txt"
    rc = run("evolve", "-N", 64, "-k", 32, "--channel", "bec", "--epsilon", 0.3, "--generations", 40,
             "--min-errors", 50, "--max-frames", 200000, "--seed", 1, "--workers", 1, "-o", out)
    assert rc == 0
    lines = (tmp_path / "bec.txt.history.csv").read_text().splitlines()
    assert lines[0] == "generation,best_rate,errors,frames,avector_hex"
    assert len(lines) - 1 == 41
    man = json.loads((tmp_path / "bec.txt.manifest.json").read_text())
    assert len(man["results"]["history"]) == 41


def test_evolve_missing_snr_is_usage_error(tmp_path):
    assert run("evolve", "-N", 16, "-k", 8, "-o", tmp_path / "x.txt") == 2


def test_simulate_ml_capacity_error(tmp_path, capsys):
    a = tmp_path / "a.txt"
    run("construct", "-N", 64, "-k", 32, "--design-snr", 2.0, "-o", a)
    assert run("simulate", "--avector", a, "--decoder", "ml", "--snr-db", 2.0, "-o", tmp_path / "s.csv") == 1
    assert "capacity" in capsys.readouterr().err


def test_simulate_missing_file(tmp_path):
    assert run("simulate", "--avector", tmp_path / "none.txt", "--snr-db", 1, "-o", tmp_path / "s.csv") == 1


def test_simulate_bad_avector_file(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("polar-avector v1\nN=8 ones=3\n17\n")
    assert run("simulate", "--avector", bad, "--snr-db", 1, "-o", tmp_path / "s.csv") == 1


def test_simulate_list_sweep_columns(tmp_path):
    a = tmp_path / "a.txt"
    run("construct", "-N", 32, "-k", 16, "--design-snr", 2.0, "-o", a)
    out = tmp_path / "s.csv"
    assert run("simulate", "--avector", a, "--decoder", "scl", "--list-size", 1, 2, "--snr-db", 2.0,
               "--min-errors", 10, "--seed", 1, "--workers", 1, "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "list_size,snr_db,frames,bit_errs,blk_errs,ber,bler,avg_iters,seed"
    assert [l.split(",")[0] for l in lines[1:]] == ["1", "2"]


def test_simulate_two_grids_is_usage_error(tmp_path):
    a = tmp_path / "a.txt"
    run("construct", "-N", 32, "-k", 16, "--design-snr", 2.0, "-o", a)
    assert run("simulate", "--avector", a, "--decoder", "scl", "--list-size", 1, 2, "--snr-db", 1, 2, "-o", tmp_path / "s.csv") == 2


def test_analyze_rm_p84(tmp_path):
    a = tmp_path / "rm.txt"
    run("construct", "-N", 8, "-k", 4, "--method", "rm", "-o", a)
    out = tmp_path / "spec.csv"
    assert run("analyze", "--avector", a, "-o", out) == 0
    assert out.read_text().splitlines() == ["weight,count", "0,1", "4,14", "8,1"]


def test_chart_fig_size(tmp_path):
    a = tmp_path / "a.txt"
    run("construct", "-N", 2048, "-k", 1024, "--design-snr", 2.0, "-o", a)
    pgm, csv = tmp_path / "c.pgm", tmp_path / "c.csv"
    assert run("chart", "--avector", a, "--design-snr", 2.0, "--width", 128, "-o", pgm, "--csv", csv) == 0
    data = pgm.read_bytes()
    assert data.startswith(b"P5\n128 16\n255\n")
    assert len(data) == len(b"P5\n128 16\n255\n") + 2048
    assert len(csv.read_text().splitlines()) == 16


def test_chart_bad_width(tmp_path):
    a = tmp_path / "a.txt"
    run("construct", "-N", 8, "-k", 4, "--design-epsilon", 0.5, "-o", a)
    assert run("chart", "--avector", a, "--design-epsilon", 0.5, "--width", 3, "-o", tmp_path / "c.pgm") == 2


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# construct settings\nN = 8\nk = 2\nmethod = \"bhattacharyya\"\ndesign_epsilon = 0.5\n")
    out = tmp_path / "a.txt"
    assert run("construct", "--config", cfg, "-k", 4, "-o", out) == 0
    assert AVector.load(out).positions() == [4, 6, 7, 8]
    cfg.write_text("colour = blue\n")
    assert run("construct", "--config", cfg, "-N", 8, "-k", 4, "-o", out) == 2


def test_seed_environment_variable(tmp_path, monkeypatch):
    a = tmp_path / "a.txt"
    run("construct", "-N", 16, "-k", 8, "--design-snr", 2.0, "-o", a)
    common = ["simulate", "--avector", a, "--snr-db", 1.0, "--min-errors", 5, "--workers", 1]
    monkeypatch.setenv("POLARFORGE_SEED", "77")
    run(*common, "-o", tmp_path / "env.csv")
    assert json.loads((tmp_path / "env.csv.manifest.json").read_text())["seed"] == 77
    run(*common, "--seed", 3, "-o", tmp_path / "flag.csv")
    assert json.loads((tmp_path / "flag.csv.manifest.json").read_text())["seed"] == 3
    monkeypatch.delenv("POLARFORGE_SEED")
    run(*common, "-o", tmp_path / "rand.csv")
    assert isinstance(json.loads((tmp_path / "rand.csv.manifest.json").read_text())["seed"], int)


def test_replay_reproduces_simulate(tmp_path):
    a = tmp_path / "a.txt"
    run("construct", "-N", 32, "-k", 16, "--design-snr", 2.0, "-o", a)
    out = tmp_path / "s.csv"
    run("simulate", "--avector", a, "--snr-db", 1.0, 2.0, "--min-errors", 20, "-o", out)
    assert run("replay", tmp_path / "s.csv.manifest.json", "--outdir", tmp_path / "again") == 0
    assert (tmp_path / "again" / "s.csv").read_bytes() == out.read_bytes()


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "polarforge", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("polarforge ")

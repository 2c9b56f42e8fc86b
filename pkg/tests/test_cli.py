import csv
import json

import pytest
import yaml

from richcache.cli import main

SMALL_SIM = {
    "catalog": {"n_contents": 3, "chunks_per_content": 60, "chunk_bits": 520000},
    "c_hat": 0.2,
    "bandwidth_b": 2.08e6,
    "eval_positions": 2,
}
SMALL_TRACE = {
    "routes": [{"ens": ["A", "B", "C"], "weight": 1.0}],
    "dwell": {en: [[0.7, 2, 4], [0.3, 10, 15]] for en in "ABC"},
    "n_cars": 12,
    "arrival_rate": 0.3,
    "seed": 4,
}


def write_config(tmp_path, **sections):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(sections))
    return str(path)


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_generate_and_analyze(tmp_path):
    assert main(["generate-trace", "--preset", "bimodal-3en", "--n-cars", "300", "--seed", "2", "--out-dir", str(tmp_path)]) == 0
    assert main(["analyze-trace", "--trace", str(tmp_path / "trace.csv"), "--out-dir", str(tmp_path), "--min-cars", "5"]) == 0
    report = json.loads((tmp_path / "trace_stats.json").read_text())
    assert report["n_cars"] == 300
    assert report["significant_paths"] == [{"path": ["A", "B", "C"], "cars": 300}]
    a = report["ens"]["A"]
    # 20 % of cars dwell 25-40 s at A, the rest 3-6 s
    assert abs(a["slow_count"] / a["sample_count"] - 0.2) < 0.06
    assert 0.2 * 32.5 + 0.8 * 4.5 == pytest.approx(a["mean_dwell"], rel=0.1)


def test_empty_trace_gives_empty_report(tmp_path):
    trace = tmp_path / "empty.csv"
    trace.write_text("car_id,en_id,t_enter,t_exit\n")
    assert main(["analyze-trace", "--trace", str(trace), "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "trace_stats.json").read_text())
    assert report["ens"] == {} and report["significant_paths"] == []


def test_error_exit_codes(tmp_path, capsys):
    assert main(["analyze-trace", "--trace", str(tmp_path / "missing.csv")]) == 2
    assert "missing.csv" in capsys.readouterr().err
    bad = tmp_path / "bad.csv"
    bad.write_text("car_id,en_id,t_enter,t_exit\nc,A,0,5\nc,B,3,9\n")
    assert main(["analyze-trace", "--trace", str(bad)]) == 2
    assert main(["plan", "--taus", "1.5"]) == 1
    assert main(["no-such-command"]) == 1
    assert main([]) == 1
    assert main(["simulate", "--config", str(tmp_path / "none.yaml")]) == 2


def test_plan_dump(tmp_path):
    cfg = write_config(tmp_path, plan={"chunk_pdfs": [{"triangular": [10, 9]}] * 4, "n_chunks": 40, "taus": [0.8]})
    assert main(["plan", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    summary = rows(tmp_path / "plan_summary.csv")
    copies = [int(r["copies"]) for r in summary]
    assert copies[0] == 1 and max(copies) == 3
    phi = json.loads((tmp_path / "phi.json").read_text())
    assert (phi["n_ens"], phi["n_chunks"]) == (4, 40)
    plan = json.loads((tmp_path / "plan.json").read_text())
    assert plan["chunks"][0]["k"] == 1


def test_plan_deterministic_pdfs_single_copy(tmp_path):
    cfg = write_config(tmp_path, plan={"chunk_pdfs": [{"point": 5}, {"point": 7}], "taus": [0.5]})
    assert main(["plan", "--config", cfg, "--out-dir", str(tmp_path)]) == 0
    assert {r["copies"] for r in rows(tmp_path / "plan_summary.csv")} == {"1"}


def test_plan_from_trace_statistics(tmp_path):
    main(["generate-trace", "--preset", "bimodal-3en", "--n-cars", "100", "--out-dir", str(tmp_path)])
    main(["analyze-trace", "--trace", str(tmp_path / "trace.csv"), "--out-dir", str(tmp_path)])
    code = main(["plan", "--stats", str(tmp_path / "trace_stats.json"), "--path", "A,B", "--taus", "0.8,0.6",
                 "--capacity", "300", "--n-chunks", "300", "--out-dir", str(tmp_path)])
    assert code == 0
    assert len(rows(tmp_path / "plan_summary.csv")) == 300
    assert main(["plan", "--stats", str(tmp_path / "trace_stats.json"), "--path", "A,Q"]) == 2


def test_cache_size_sweep_rows(tmp_path):
    cfg = write_config(tmp_path, trace={"synthetic": SMALL_TRACE}, simulation=SMALL_SIM)
    c_hats = ",".join(str(x / 10) for x in range(1, 11))
    assert main(["simulate", "--config", cfg, "--c-hat", c_hats, "--policies", "rich,netpredict,pop",
                 "--out-dir", str(tmp_path)]) == 0
    out = rows(tmp_path / "results.csv")
    assert len(out) == 30
    keys = [(r["policy"], float(r["c_hat"])) for r in out]
    assert keys == sorted(keys)
    full = [r for r in out if float(r["c_hat"]) == 1.0]
    assert all(float(r["hit_prob"]) == 1.0 for r in full if r["policy"] == "pop")


def test_duplicate_seeds_identical_rows(tmp_path):
    cfg = write_config(tmp_path, trace={"synthetic": SMALL_TRACE}, simulation=SMALL_SIM)
    assert main(["simulate", "--config", cfg, "--seeds", "3,3", "--out-dir", str(tmp_path)]) == 0
    a, b = rows(tmp_path / "results.csv")
    assert a == b


def test_dwell_error_sweep_columns(tmp_path):
    cfg = write_config(tmp_path, trace={"synthetic": SMALL_TRACE}, simulation=SMALL_SIM)
    assert main(["simulate", "--config", cfg, "--dwell-mu=-5,0,5", "--out-dir", str(tmp_path)]) == 0
    out = rows(tmp_path / "results.csv")
    assert [float(r["dwell_mu"]) for r in out] == [-5.0, 0.0, 5.0]


def test_flag_and_set_overrides(tmp_path):
    cfg = write_config(tmp_path, trace={"synthetic": SMALL_TRACE}, simulation=SMALL_SIM)
    assert main(["simulate", "--config", cfg, "--seed", "9", "--set", "simulation.policy=pop",
                 "--out-dir", str(tmp_path)]) == 0
    (r,) = rows(tmp_path / "results.csv")
    assert r["seed"] == "9" and r["policy"] == "pop"
    assert main(["simulate", "--config", cfg, "--set", "simulation.bogus=1"]) == 1


def test_optimize_surface(tmp_path):
    trace = dict(SMALL_TRACE, n_cars=3)
    cfg = write_config(tmp_path, trace={"synthetic": trace}, simulation=SMALL_SIM)
    assert main(["optimize-thresholds", "--config", cfg, "--grid", "0.1,0.3,0.5,0.7,0.9", "--n-positions", "3",
                 "--out-dir", str(tmp_path)]) == 0
    assert len(rows(tmp_path / "surface.csv")) == 125
    best = json.loads((tmp_path / "best_profile.json").read_text())
    assert len(best["taus"]) == 3
    assert main(["optimize-thresholds", "--config", cfg, "--grid", "0.5", "--n-positions", "3", "--out-dir", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "best_profile.json").read_text())["taus"] == [0.5, 0.5, 0.5]
    assert main(["optimize-thresholds", "--config", cfg, "--grid", ""]) == 1


def test_example_configs_parse():
    from pathlib import Path

    from richcache.sim import SimulationConfig

    for path in sorted(Path(__file__).parent.parent.joinpath("configs").glob("*.yaml")):
        data = yaml.safe_load(path.read_text())
        if "simulation" in data:
            SimulationConfig.from_dict(data["simulation"])

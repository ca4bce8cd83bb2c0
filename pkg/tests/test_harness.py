import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from qkd_ir import harness
from qkd_ir.cli import build_spec, main, ConfigError
from qkd_ir.harness import ExperimentSpec


def _spec(**kw):
    base = dict(n=4096, frames=3, q_grid=(0.03,), seed=1)
    base.update(kw)
    return ExperimentSpec(**base)


def test_aggregates_equal_recomputation_from_frames():
    frames = []
    rows = harness.run_efficiency_sweep(_spec(q_grid=(0.02, 0.05)), {}, frame_rows=frames)
    for r in rows:
        sub = [f for f in frames if f["q_true"] == r["q"]]
        assert r["frames"] == len(sub)
        assert r["mean_f"] == pytest.approx(np.mean([f["f"] for f in sub]), rel=1e-15)
        assert r["mean_messages"] == pytest.approx(np.mean([f["messages"] for f in sub]))
        assert r["fer"] == sum(1 - f["success"] for f in sub) / len(sub)


def test_mismatch_rows():
    rows = harness.run_mismatch_sweep(_spec(q_hat_grid=(0.02, 0.04)), {})
    assert [(r["q_true"], r["q_hat"]) for r in rows] == [(0.03, 0.02), (0.03, 0.04)]


def test_latency_bench_model_algebra():
    rows = harness.run_latency_bench(_spec(compute_time=0.0))
    zero = [r for r in rows if r["latency"] == 0.0][0]
    assert zero["throughput"] == float("inf")
    rows = harness.run_latency_bench(_spec(compute_time=0.2))
    zero = [r for r in rows if r["latency"] == 0.0][0]
    assert zero["throughput"] == pytest.approx(4096 / 0.2)
    d = harness.throughput_decline(rows, 0.03)
    assert 0 < d < harness.throughput_decline(rows, 0.03, column="throughput_latency_only")


def test_cluster_sweep_rows():
    rows = harness.run_cluster_sweep(_spec(q_grid=(0.02,), fer_grid=(0.0, 1e-3)))
    assert len(rows) == 4
    assert rows[0]["k_opt"] == 64


def test_continuous_run():
    spec = _spec(frames=10, ec_per_full_frame=4)
    rows = harness.run_continuous(spec)
    assert len(rows) == 10
    full = [r for r in rows if r["full_frame_f"] != ""]
    assert len(full) == 2
    assert all(r["leak_ev"] >= spec.verification.t for r in rows)
    assert rows[0]["q_hat"] == spec.drift.q_mean
    # later estimates are the previous frame's measured QBER
    assert rows[1]["q_hat"] != rows[0]["q_hat"]


def test_csv_writer_is_deterministic(tmp_path):
    spec = _spec()
    rows = harness.run_efficiency_sweep(spec, {})
    p1 = harness.write_output(rows, tmp_path / "a", "x", spec)
    p2 = harness.write_output(harness.run_efficiency_sweep(spec, {}), tmp_path / "b", "x", spec)
    assert p1.read_bytes() == p2.read_bytes()
    meta = json.loads((tmp_path / "a" / "x.meta.json").read_text())
    assert meta["seed"] == 1 and meta["spec"]["n"] == 4096


def _write_cfg(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return str(p)


def test_build_spec_from_config(tmp_path):
    cfg = _write_cfg(tmp_path, "[experiment]\nframes = 2\nq_grid = 0.01, 0.02\nn = 1024\n"
                               "[cascade]\nk1_constant = 0.73\n[blind]\nalpha = 2\n")
    spec = build_spec(cfg, seed=9, latency_ms=2.0)
    assert spec.frames == 2 and spec.q_grid == (0.01, 0.02) and spec.n == 1024
    assert spec.cascade.k1_constant == 0.73 and spec.blind.alpha == 2.0
    assert spec.seed == 9 and spec.latency.one_way_latency == pytest.approx(0.002)


@pytest.mark.parametrize("text", ["[experiment]\nframes = zero\n", "[nope]\na = 1\n",
                                  "[cascade]\nblock_growth = 3\n", "[experiment]\nunknown = 1\n"])
def test_config_errors_exit_2(tmp_path, text):
    res = CliRunner().invoke(main, ["simulate", "--config", _write_cfg(tmp_path, text),
                                    "--out", str(tmp_path)])
    assert res.exit_code == 2


def test_missing_config_file_exit_2(tmp_path):
    res = CliRunner().invoke(main, ["sweep-cluster", "--config", str(tmp_path / "none.ini")])
    assert res.exit_code == 2


def test_manifest_error_exit_3(tmp_path):
    cfg = _write_cfg(tmp_path, "[experiment]\nprotocols = blind\ncode_sets = N123\nframes = 1\n")
    res = CliRunner().invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path)])
    assert res.exit_code == 3
    res = CliRunner().invoke(main, ["gen-code", "--manifest", str(tmp_path / "missing.json")])
    assert res.exit_code == 3


def test_cli_simulate_byte_identical(tmp_path):
    cfg = _write_cfg(tmp_path, "[experiment]\nframes = 2\nq_grid = 0.04\nn = 2048\n")
    r = CliRunner()
    for d in ("a", "b"):
        res = r.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / d), "--seed", "3"])
        assert res.exit_code == 0, res.output
    a = (tmp_path / "a" / "simulate.csv").read_bytes()
    assert a == (tmp_path / "b" / "simulate.csv").read_bytes()
    header = next(csv.reader(a.decode().splitlines()))
    assert {"q", "protocol", "frame_size", "mean_f", "fer", "mean_messages"} <= set(header)


def test_cli_other_subcommands(tmp_path):
    cfg = _write_cfg(tmp_path, "[experiment]\nframes = 2\nq_grid = 0.03\nn = 2048\ntrajectory_bits = 4194304\n"
                               "[estimator]\nblock_sizes = 1024, 4096\n")
    r = CliRunner()
    for cmd in ("sweep-qber-mismatch", "sweep-cluster", "estimate-blocksize", "bench-latency", "continuous"):
        res = r.invoke(main, [cmd, "--config", cfg, "--out", str(tmp_path / "o")])
        assert res.exit_code == 0, (cmd, res.output)
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert "estimator.csv" in names and "continuous.meta.json" in names


def test_gen_code_small_manifest(tmp_path):
    man = {"sets": {"tiny": {"N": 400, "d_fraction": 0.1, "f_design": 1.1, "seed": 2,
                             "codes": [{"m": 100}, {"m": 200}]}}}
    (tmp_path / "m.json").write_text(json.dumps(man))
    res = CliRunner().invoke(main, ["gen-code", "--manifest", str(tmp_path / "m.json"),
                                    "--out", str(tmp_path / "codes")])
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader((tmp_path / "codes" / "codes.csv").read_text().splitlines()))
    assert [int(r["m"]) for r in rows] == [100, 200]
    assert len(list((tmp_path / "codes").glob("*.alist"))) == 2

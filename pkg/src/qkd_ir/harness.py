"""Experiment runners behind the ``recon-bench`` command line.

Every runner returns a list of row dicts.  Aggregate rows are recomputed
from per-frame reports; nothing is accumulated on a separate path.  Frames
for grid point ``(q, frame)`` depend only on ``(seed, frame)`` so different
grid points see common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .blind import BlindConfig, blind_reconcile
from .cascade import CascadeConfig, cascade_reconcile
from .core import BitFrame, ChannelParams, ReconciliationReport, binary_entropy, transmit_bsc
from .ldpc.codeset import CodeSet, load_code_set
from .postproc import (DriftProcess, EstimatorStudyConfig, VerificationParams, drift_trajectory,
                       optimize_cluster, qber_estimator_study, verify_cluster)
from .session import LatencyModel, open_session, replay_leakage, throughput

log = logging.getLogger(__name__)


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce one experiment."""

    kind: str = "simulate"
    protocols: tuple = ("cascade",)
    q_grid: tuple = (0.02, 0.04, 0.06)
    q_hat_grid: tuple = ()
    frames: int = 100
    seed: int = 0
    n: int = 65536
    code_sets: tuple = ("N65536",)
    latency: LatencyModel = field(default_factory=LatencyModel)
    latency_grid: tuple = (0.0, 0.001, 0.002, 0.003, 0.004, 0.005)
    compute_time: float | None = None
    transport: str = "memory"
    cascade: CascadeConfig = field(default_factory=CascadeConfig)
    blind: BlindConfig = field(default_factory=BlindConfig)
    verification: VerificationParams = field(default_factory=VerificationParams)
    fer_grid: tuple = (0.0, 1e-4, 1e-3, 1e-2)
    k_max: int = 64
    f_reference: float = 1.1
    drift: DriftProcess = field(default_factory=DriftProcess)
    trajectory_bits: int = 2 ** 28
    estimator: EstimatorStudyConfig = field(default_factory=EstimatorStudyConfig)
    ec_per_full_frame: int = 8

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if not self.q_grid:
            raise ValueError("q_grid must not be empty")
        if self.ec_per_full_frame < 1:
            raise ValueError("ec_per_full_frame must be at least 1")

    def echo(self) -> dict:
        return _jsonable(asdict(self))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------- single frames


class OracleMismatch(AssertionError):
    """A report claims success although Bob's frame differs from Alice's."""


def simulate_frame(protocol: str, spec: ExperimentSpec, q: float, q_hat: float, frame: int,
                   code_set: CodeSet | None = None, latency: LatencyModel | None = None,
                   seed_offset: int = 0):
    """Reconcile one simulated frame; returns ``(report, x, y, bob_output)``.

    The success flag is checked against Alice's frame and the session
    ledger against a transcript replay.
    """
    n = code_set.n if protocol == "blind" else spec.n
    seed = spec.seed + seed_offset
    x = BitFrame.random(n, seed, frame)
    y = transmit_bsc(x, ChannelParams(q, seed))
    with open_session(latency or spec.latency, spec.transport) as s:
        if protocol == "cascade":
            cfg = replace(spec.cascade, seed=seed)
            rep, out = cascade_reconcile(s.alice, s.bob, x, y, q_hat, cfg, q_true=q, return_frame=True)
        elif protocol == "blind":
            cfg = replace(spec.blind, seed=seed)
            rep, out = blind_reconcile(s.alice, s.bob, x, y, q_hat, code_set, cfg, q_true=q,
                                       return_frame=True)
        else:
            raise ValueError(f"unknown protocol {protocol!r}")
        if replay_leakage(s.transcript) != s.ledger.leaked_bits:
            raise AssertionError("ledger disagrees with transcript replay")
    if rep.success and not np.array_equal(out.bits, x.bits):
        raise OracleMismatch(f"{protocol} frame {frame}: success flagged with residual errors")
    rep.extra["frame"] = frame
    return rep, x, y, out


def run_frame(protocol: str, spec: ExperimentSpec, q: float, q_hat: float, frame: int,
              code_set: CodeSet | None = None, latency: LatencyModel | None = None,
              seed_offset: int = 0) -> ReconciliationReport:
    """Reconcile one simulated frame and validate the success flag."""
    return simulate_frame(protocol, spec, q, q_hat, frame, code_set, latency, seed_offset)[0]


def _frame_size(protocol: str, spec: ExperimentSpec, code_set: CodeSet | None) -> int:
    return code_set.N if protocol == "blind" else spec.n


def _aggregate(reports: list[ReconciliationReport]) -> dict:
    f = np.array([r.f for r in reports])
    msgs = np.array([r.messages for r in reports], dtype=float)
    fails = sum(not r.success for r in reports)
    return {
        "frames": len(reports),
        "mean_f": float(np.mean(f)),
        "std_f": float(np.std(f, ddof=1)) if len(f) > 1 else 0.0,
        "fer": fails / len(reports),
        "mean_messages": float(np.mean(msgs)),
        "mean_rounds": float(np.mean([r.rounds for r in reports])),
    }


def _protocol_targets(spec: ExperimentSpec, code_sets: dict):
    for proto in spec.protocols:
        if proto == "blind":
            for name in spec.code_sets:
                yield proto, code_sets[name]
        else:
            yield proto, None


def load_sets(spec: ExperimentSpec) -> dict:
    if "blind" not in spec.protocols:
        return {}
    return {name: load_code_set(name) for name in spec.code_sets}


# ---------------------------------------------------------------- experiments


def run_efficiency_sweep(spec: ExperimentSpec, code_sets: dict | None = None,
                         frame_rows: list | None = None) -> list[dict]:
    """Mean efficiency, FER and message count per protocol, frame size and QBER."""
    code_sets = load_sets(spec) if code_sets is None else code_sets
    rows = []
    for proto, cs in _protocol_targets(spec, code_sets):
        for q in spec.q_grid:
            reps = [run_frame(proto, spec, q, q, i, cs) for i in range(spec.frames)]
            if frame_rows is not None:
                frame_rows.extend(dict(r.as_row(), frame=r.extra["frame"]) for r in reps)
            agg = _aggregate(reps)
            n = reps[0].n
            rows.append({"q": q, "protocol": proto, "frame_size": _frame_size(proto, spec, cs), **agg,
                         "messages_per_bit": agg["mean_messages"] / n})
    return rows


def run_message_count(spec: ExperimentSpec, code_sets: dict | None = None) -> list[dict]:
    rows = run_efficiency_sweep(spec, code_sets)
    return [{k: r[k] for k in ("q", "protocol", "frame_size", "mean_messages", "messages_per_bit")}
            for r in rows]


def run_mismatch_sweep(spec: ExperimentSpec, code_sets: dict | None = None) -> list[dict]:
    """Efficiency and messages when the estimate ``q_hat`` differs from ``q``."""
    code_sets = load_sets(spec) if code_sets is None else code_sets
    q_hats = spec.q_hat_grid or tuple(round(0.01 * i, 4) for i in range(1, 11))
    rows = []
    for proto, cs in _protocol_targets(spec, code_sets):
        for q in spec.q_grid:
            for qh in q_hats:
                reps = [run_frame(proto, spec, q, qh, i, cs) for i in range(spec.frames)]
                agg = _aggregate(reps)
                row = {"q_true": q, "q_hat": qh, "protocol": proto,
                       "frame_size": _frame_size(proto, spec, cs), **agg}
                if proto == "blind":
                    row["code_index"] = reps[0].extra["code_index"]
                rows.append(row)
    return rows


def run_latency_bench(spec: ExperimentSpec) -> list[dict]:
    """Serial throughput of Cascade against one-way latency.

    Rounds come from simulated frames; the compute term is the mean measured
    wall time per frame unless ``spec.compute_time`` fixes it.  The
    latency-only model (no compute term) is reported alongside.
    """
    rows = []
    for q in spec.q_grid:
        reps = [run_frame("cascade", spec, q, q, i) for i in range(spec.frames)]
        tc = spec.compute_time if spec.compute_time is not None else float(np.mean([r.wall_time for r in reps]))
        for lat in spec.latency_grid:
            model = LatencyModel(lat)
            tp = float(np.mean([throughput(r, model, tc) for r in reps]))
            tp_lat = float(np.mean([throughput(r, model, 0.0) for r in reps]))
            rows.append({"q": q, "latency": lat, "compute_time": tc,
                         "mean_rounds": float(np.mean([r.rounds for r in reps])),
                         "throughput": tp, "throughput_latency_only": tp_lat})
    return rows


def throughput_decline(rows: list[dict], q: float, lo: float = 0.001, hi: float = 0.005,
                       column: str = "throughput") -> float:
    """Relative throughput loss between two latencies of a latency bench."""
    pick = {r["latency"]: r[column] for r in rows if r["q"] == q}
    return 1.0 - pick[hi] / pick[lo]


def run_cluster_sweep(spec: ExperimentSpec) -> list[dict]:
    """Optimal cluster size with and without a repeat request over (q, FER)."""
    rows = []
    n = spec.n
    for q in spec.q_grid:
        for fer in spec.fer_grid:
            for rep in (0, 1):
                k, fe = optimize_cluster(spec.f_reference, fer, n, q, spec.verification, rep, spec.k_max)
                rows.append({"q": q, "fer": fer, "repeats_allowed": rep, "k_opt": k, "f_eff": fe})
    return rows


def run_estimator_study(spec: ExperimentSpec) -> list[dict]:
    traj = drift_trajectory(spec.trajectory_bits, spec.drift, spec.seed)
    return qber_estimator_study(traj, spec.estimator)


def run_continuous(spec: ExperimentSpec, protocol: str = "cascade",
                   code_set: CodeSet | None = None, ec_frames: int | None = None) -> list[dict]:
    """Stream frames through estimation, reconciliation and verification.

    The QBER follows ``spec.drift`` with one step per EC frame.  Each frame
    is reconciled with the previous frame's measured QBER as estimate; a
    frame failing verification is reconciled once more, so its leakage
    counts twice.  Rows are per EC frame; ``full_frame_f`` is filled on the
    last EC frame of each full frame.
    """
    n = code_set.n if protocol == "blind" else spec.n
    total = ec_frames or spec.frames
    traj = drift_trajectory(total * n, replace(spec.drift, chunk=n), spec.seed)
    q_hat = float(spec.drift.q_mean)
    rows = []
    leak_acc = ent_acc = 0.0
    for i in range(total):
        q = float(traj.q[i])
        leak = messages = leak_ev = 0
        for attempt in range(2):
            rep, x, y, out = simulate_frame(protocol, spec, q, q_hat, i, code_set,
                                            seed_offset=7919 * attempt)
            leak += rep.leak_ir
            messages += rep.messages
            ok, tag_bits = verify_cluster([x], [out], spec.verification, seed=spec.seed + i)
            leak_ev += tag_bits
            if ok:
                break
        h = binary_entropy(q)
        leak_acc += leak
        ent_acc += n * h
        row = {"ec_frame": i, "q_true": q, "q_hat": q_hat, "f": leak / (n * h),
               "messages": messages, "leak_ir": leak, "leak_ev": leak_ev,
               "repeated": attempt, "success": int(ok), "full_frame_f": ""}
        if (i + 1) % spec.ec_per_full_frame == 0:
            row["full_frame_f"] = leak_acc / ent_acc
            leak_acc = ent_acc = 0.0
        rows.append(row)
        # a corrected frame reveals its error count exactly
        if ok:
            q_hat = min(max(float(np.count_nonzero(x.bits != y.bits)) / n, 1e-3), 0.49)
    return rows


# ---------------------------------------------------------------- output


def rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0])
    for r in rows[1:]:
        cols.extend(c for c in r if c not in cols)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def write_output(rows: list[dict], out_dir, name: str, spec: ExperimentSpec,
                 code_sets: dict | None = None, extra: dict | None = None) -> Path:
    """Write ``<name>.csv`` and ``<name>.meta.json`` (spec echo, seeds, code hashes)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    path.write_text(rows_to_csv(rows))
    meta = {"experiment": name, "version": __version__, "seed": spec.seed, "spec": spec.echo(),
            "code_sets": {k: v.fingerprints() for k, v in (code_sets or {}).items()}}
    if extra:
        meta.update(extra)
    (out / f"{name}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def timed(fn, *args, **kw):
    t0 = time.perf_counter()
    res = fn(*args, **kw)
    return res, time.perf_counter() - t0

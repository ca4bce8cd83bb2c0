"""``recon-bench``: command-line front end of the experiment harness.

Configuration is an INI file with optional sections ``[experiment]``,
``[cascade]``, ``[blind]``, ``[verification]``, ``[cluster]``, ``[drift]``
and ``[estimator]``.  Lists are comma separated.  Exit status: 0 success,
2 configuration error, 3 data or manifest error.
"""

from __future__ import annotations

import configparser
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import click

from . import harness
from .blind import BlindConfig
from .cascade import CascadeConfig
from .ldpc.alist import AlistError
from .ldpc.codeset import ManifestError, cache_dir, load_code_set, load_manifest
from .postproc import DriftProcess, EstimatorStudyConfig, VerificationParams
from .session import LatencyModel

EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(ValueError):
    pass


def _convert(value: str, default):
    if isinstance(default, bool):
        low = value.strip().lower()
        if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
            raise ConfigError(f"not a boolean: {value!r}")
        return low in ("1", "true", "yes", "on")
    if isinstance(default, tuple):
        items = [v.strip() for v in value.split(",") if v.strip()]
        sample = default[0] if default else ""
        return tuple(_convert(v, sample) for v in items)
    if isinstance(default, int) and not isinstance(default, bool):
        return int(value)
    if isinstance(default, float) or default is None:
        return float(value)
    return value.strip()


def _apply(obj, section: dict, name: str):
    """Return ``obj`` with fields overridden from an INI section."""
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            updates[key] = _convert(raw, getattr(obj, key))
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    try:
        return replace(obj, **updates)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}] {exc}") from None


_NESTED = {"cascade": "cascade", "blind": "blind", "verification": "verification",
           "drift": "drift", "estimator": "estimator"}


def build_spec(config_path, seed=None, latency_ms=None, bandwidth_bps=None, frames=None,
               kind: str = "simulate") -> harness.ExperimentSpec:
    spec = harness.ExperimentSpec(kind=kind)
    if config_path:
        cp = configparser.ConfigParser()
        try:
            read = cp.read(config_path)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {config_path}: {exc}") from None
        if not read:
            raise ConfigError(f"cannot read config file {config_path}")
        for sec in cp.sections():
            if sec == "experiment":
                spec = _apply(spec, dict(cp[sec]), sec)
            elif sec == "cluster":
                spec = _apply(spec, dict(cp[sec]), sec)
            elif sec in _NESTED:
                attr = _NESTED[sec]
                spec = replace(spec, **{attr: _apply(getattr(spec, attr), dict(cp[sec]), sec)})
            else:
                raise ConfigError(f"unknown section [{sec}]")
    over = {}
    if seed is not None:
        over["seed"] = seed
    if frames is not None:
        over["frames"] = frames
    if latency_ms is not None or bandwidth_bps is not None:
        try:
            over["latency"] = LatencyModel(
                (latency_ms if latency_ms is not None else spec.latency.one_way_latency * 1e3) / 1e3,
                bandwidth_bps if bandwidth_bps is not None else spec.latency.bandwidth)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    try:
        return replace(spec, **over)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _common(f):
    f = click.option("--frames", type=int, default=None, help="Frames per grid point.")(f)
    f = click.option("--bandwidth-bps", type=float, default=None, help="Link bandwidth in bits/s.")(f)
    f = click.option("--latency-ms", type=float, default=None, help="One-way latency in ms.")(f)
    f = click.option("--seed", type=int, default=None, help="Master seed.")(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default="results",
                     show_default=True, help="Output directory.")(f)
    f = click.option("--config", "config", type=click.Path(), default=None, help="INI config file.")(f)
    return f


def _run(ctx, kind, runner, name, config, out, seed, latency_ms, bandwidth_bps, frames, sets=False):
    try:
        spec = build_spec(config, seed, latency_ms, bandwidth_bps, frames, kind)
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    try:
        code_sets = harness.load_sets(spec) if sets else {}
        rows = runner(spec, code_sets) if sets else runner(spec)
    except (ManifestError, AlistError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        ctx.exit(EXIT_DATA)
    path = harness.write_output(rows, out, name, spec, code_sets)
    click.echo(str(path))


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Reconciliation benchmarks: Cascade and Blind LDPC over simulated channels."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@_common
@click.pass_context
def simulate(ctx, config, out, seed, latency_ms, bandwidth_bps, frames):
    """Efficiency, FER and message counts at matched QBER."""
    _run(ctx, "simulate", harness.run_efficiency_sweep, "simulate", config, out, seed,
         latency_ms, bandwidth_bps, frames, sets=True)


@main.command("sweep-qber-mismatch")
@_common
@click.pass_context
def sweep_qber_mismatch(ctx, config, out, seed, latency_ms, bandwidth_bps, frames):
    """Efficiency and messages over a grid of estimated QBERs."""
    _run(ctx, "mismatch", harness.run_mismatch_sweep, "mismatch", config, out, seed,
         latency_ms, bandwidth_bps, frames, sets=True)


@main.command("sweep-cluster")
@_common
@click.pass_context
def sweep_cluster(ctx, config, out, seed, latency_ms, bandwidth_bps, frames):
    """Optimal cluster size with and without a repeat request."""
    _run(ctx, "cluster", harness.run_cluster_sweep, "cluster", config, out, seed,
         latency_ms, bandwidth_bps, frames)


@main.command("estimate-blocksize")
@_common
@click.pass_context
def estimate_blocksize(ctx, config, out, seed, latency_ms, bandwidth_bps, frames):
    """MAE and RMSE of previous-frame QBER estimates over block sizes."""
    _run(ctx, "estimator", harness.run_estimator_study, "estimator", config, out, seed,
         latency_ms, bandwidth_bps, frames)


@main.command("bench-latency")
@_common
@click.pass_context
def bench_latency(ctx, config, out, seed, latency_ms, bandwidth_bps, frames):
    """Serial Cascade throughput against one-way latency."""
    _run(ctx, "latency", harness.run_latency_bench, "latency", config, out, seed,
         latency_ms, bandwidth_bps, frames)


@main.command()
@_common
@click.option("--protocol", type=click.Choice(["cascade", "blind"]), default="cascade", show_default=True)
@click.pass_context
def continuous(ctx, config, out, seed, latency_ms, bandwidth_bps, frames, protocol):
    """Drifting-QBER stream: estimate, reconcile, verify."""
    def runner(spec, code_sets):
        cs = code_sets[spec.code_sets[0]] if protocol == "blind" else None
        return harness.run_continuous(spec, protocol, cs)

    try:
        spec = build_spec(config, seed, latency_ms, bandwidth_bps, frames, "continuous")
    except (ConfigError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    try:
        code_sets = {n: load_code_set(n) for n in spec.code_sets} if protocol == "blind" else {}
        rows = runner(spec, code_sets)
    except (ManifestError, AlistError, FileNotFoundError) as exc:
        click.echo(f"data error: {exc}", err=True)
        ctx.exit(EXIT_DATA)
    click.echo(str(harness.write_output(rows, out, "continuous", spec, code_sets)))


@main.command("gen-code")
@click.option("--set", "names", multiple=True, help="Code set(s) to build (default: all).")
@click.option("--manifest", type=click.Path(), default=None, help="Manifest JSON (default: bundled).")
@click.option("--out", "out", type=click.Path(file_okay=False), default=None,
              help="Matrix directory (default: the user cache).")
@click.pass_context
def gen_code(ctx, names, manifest, out):
    """Build and cache the PEG code sets listed in the manifest."""
    try:
        man = load_manifest(manifest)
        names = names or tuple(man.get("sets", {}))
        rows = []
        for name in names:
            cs = load_code_set(name, man, out)
            for i, H in enumerate(cs.codes):
                rows.append({"set": name, "index": i, "N": H.N, "m": H.m, "rate": H.rate,
                             "punctured_rate": cs.punctured_rate(i), "d": cs.d,
                             "fingerprint": H.fingerprint()})
    except (ManifestError, AlistError) as exc:
        click.echo(f"data error: {exc}", err=True)
        ctx.exit(EXIT_DATA)
    directory = Path(out) if out else cache_dir()
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "codes.csv").write_text(harness.rows_to_csv(rows))
    click.echo(str(directory / "codes.csv"))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

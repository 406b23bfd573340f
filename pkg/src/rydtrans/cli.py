"""Command-line front end: foerster, eit, simulate and analyze subcommands.

Every run can write a manifest with the full configuration, its hash and
the seed, which is sufficient to reproduce the outputs byte for byte.
Exit codes: 0 success, 2 configuration/input errors, 3 numerical errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, eit, mc, rydberg
from .config import ConfigError, RunConfig, canonical_json, load_config
from .eit import EitParams, IntegrationError, Spectrum
from .fitkit import FitConvergenceError
from .presets import PRESETS

import hashlib

_METRIC_KEYS = ("ratio", "suppression", "gain", "tau_ms", "p0", "p0_range",
                "n_thr", "c0", "c1", "fidelity", "eta_lower", "eta_poisson")


def _metrics_json(**values) -> dict:
    out = {key: None for key in _METRIC_KEYS}
    out.update(values)
    return out


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_range(text: str, name: str) -> tuple[int, int]:
    try:
        lo_s, hi_s = text.split(":")
        lo, hi = int(lo_s), int(hi_s)
    except ValueError:
        raise ConfigError(f"{name}: expected 'low:high', got {text!r}") from None
    if hi < lo:
        raise ConfigError(f"{name}: empty range {text!r}")
    return lo, hi


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo_s, hi_s, n_s = text.split(":")
        lo, hi, n = float(lo_s), float(hi_s), int(n_s)
    except ValueError:
        raise ConfigError(f"--grid: expected 'low:high:points', got {text!r}") from None
    if n < 2 or hi <= lo:
        raise ConfigError(f"--grid: need an increasing range with >= 2 points")
    return np.linspace(lo, hi, n)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(getattr(args, "out_dir", None) or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(args, cfg: RunConfig) -> int:
    explicit = getattr(args, "seed", None)
    return cfg.seed if explicit is None else explicit


# ---------------------------------------------------------------------------
# subcommands

def cmd_foerster(args, cfg: RunConfig) -> int:
    lo, hi = _parse_range(args.n, "--n")
    if args.channels:
        try:
            channels = [rydberg.parse_channel(c)
                        for c in args.channels.split(",") if c]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not channels:
            raise ConfigError("--channels: empty channel list")
    else:
        channels = list(rydberg.ALL_CHANNELS)
    table = cfg.defect_table()
    scan = rydberg.foerster_scan(table, range(lo, hi + 1), channels)
    out = _out_dir(args, cfg)
    csv_path = out / "foerster_scan.csv"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,channel,delta_e_ghz\n")
        for n, channel, de in scan.rows:
            fh.write(f"{n},{rydberg.channel_key(channel)},{format(de, '.12g')}\n")
    _write_json(out / "foerster_crossings.json", {"crossings": scan.crossings})
    _say(args, f"scanned n in [{lo}, {hi}] over {len(channels)} channels; "
               f"{len(scan.crossings)} sign changes -> {csv_path}")
    return 0


def cmd_eit_spectrum(args, cfg: RunConfig) -> int:
    params = _eit_params_from(args, cfg)
    grid = _parse_grid(args.grid)
    result = eit.transmission_spectrum(params, grid)
    out = _out_dir(args, cfg)
    csv_path = out / "eit_spectrum.csv"
    _write_spectrum_csv(csv_path, result.spectrum)
    fwhm = "unresolved" if result.fwhm_mhz is None else f"{result.fwhm_mhz:.4g} MHz"
    _say(args, f"spectrum with od={params.od}: T(0)={result.t_at_zero:.4g}, "
               f"window FWHM {fwhm} -> {csv_path}")
    return 0


def cmd_eit_fit(args, cfg: RunConfig) -> int:
    spectrum = _load(_read_spectrum_csv, args.input)
    init = _eit_params_from(args, cfg)
    fit = eit.fit_spectrum(spectrum, init)
    out = _out_dir(args, cfg)
    report = {
        "od": fit.params.od,
        "omega_c_mhz": fit.params.omega_c,
        "gamma_r_mhz": fit.params.gamma_r,
        "fwhm_mhz": fit.fwhm_mhz,
        "t0": fit.t_at_zero,
        "residual": fit.residual_norm,
    }
    _write_json(out / "eit_fit.json", report)
    _say(args, f"fit: od={fit.params.od:.4g}, fwhm={fit.fwhm_mhz}, "
               f"t0={fit.t_at_zero:.4g}")
    return 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    experiment = cfg.experiment
    if args.preset:
        experiment = PRESETS[args.preset]()
    gated = _parse_bool(args.gated)
    seed = _seed(args, cfg)
    result = mc.simulate_run(experiment, args.shots, seed, gated=gated,
                             backend=args.backend)
    out = _out_dir(args, cfg)
    result.trace.to_csv(out / "trace.csv")
    result.histogram.to_csv(out / "histogram.csv")
    raw = dict(cfg.raw)
    raw["experiment"] = experiment.as_dict()
    manifest = {
        "command": "simulate",
        "version": __version__,
        "config": raw,
        "config_sha256": hashlib.sha256(canonical_json(raw).encode()).hexdigest(),
        "seed": seed,
        "shots": args.shots,
        "gated": gated,
        "backend": result.backend,
        "outputs": ["trace.csv", "histogram.csv"],
    }
    _write_json(out / "manifest.json", manifest)
    _say(args, f"{args.shots} shots ({'gated' if gated else 'reference'}, "
               f"{result.backend}): mean clicks "
               f"{result.histogram.mean:.4g} -> {out}")
    return 0


def _load(reader, path):
    """Read an input file; malformed content is a configuration error."""
    try:
        return reader(Path(path))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_analyze_extinction(args, cfg: RunConfig) -> int:
    gated = _load(mc.TimeTrace.from_csv, args.gated)
    ref = _load(mc.TimeTrace.from_csv, args.ref)
    metrics = analysis.extinction_gain(gated, ref, args.n_g)
    payload = _metrics_json(ratio=metrics.ratio, suppression=metrics.suppression,
                            gain=metrics.gain)
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", payload)
    _say(args, f"extinction (suppressed fraction) {metrics.suppression:.4g}, "
               f"raw ratio {metrics.ratio:.4g}, gain {metrics.gain:.4g}")
    return 0


def cmd_analyze_decay(args, cfg: RunConfig) -> int:
    gated = _load(mc.TimeTrace.from_csv, args.gated)
    ref = _load(mc.TimeTrace.from_csv, args.ref)
    start = args.fit_start_us if args.fit_start_us is not None \
        else cfg.analysis["fit_start_us"]
    fit = analysis.decay_fit(gated, ref, fit_start_us=start)
    payload = _metrics_json(tau_ms=fit.tau_ms)
    payload["tau_err_ms"] = fit.tau_err_ms
    payload["depth"] = fit.depth
    payload["degenerate"] = fit.degenerate
    payload["radiative_reference_ms"] = fit.radiative_reference_ms
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", payload)
    if fit.degenerate:
        _say(args, "flat ratio: recovery time undefined")
    else:
        _say(args, f"recovery tau = {fit.tau_ms:.4g} ms (radiative reference "
                   f"{fit.radiative_reference_ms} ms)")
    return 0


def cmd_analyze_bimodal(args, cfg: RunConfig) -> int:
    hist = _load(mc.ClickHistogram.from_csv, args.hist)
    ref = _reference_from(args)
    cut = args.cut if args.cut is not None else cfg.analysis["n_cut"]
    fit = analysis.bimodal_fit(hist, ref, cut)
    if args.scan:
        try:
            lo_s, hi_s = args.scan.split(":")
            lo, hi = float(lo_s), float(hi_s)
        except ValueError:
            raise ConfigError(f"--scan: expected 'low:high', got {args.scan!r}") \
                from None
    else:
        lo, hi = cfg.analysis["cut_scan"]
    scan = analysis.cutoff_scan(hist, ref, (float(lo), float(hi)))
    payload = _metrics_json(p0=fit.p0, p0_range=[scan.p0_min, scan.p0_max])
    payload["p0_err"] = fit.p0_err
    payload["p0_spread"] = scan.spread
    payload["n_cut"] = fit.n_cut
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", payload)
    _say(args, f"p0 = {fit.p0:.4g} at cut {fit.n_cut} "
               f"(scan spread {scan.spread:.4g})")
    return 0


def cmd_analyze_fidelity(args, cfg: RunConfig) -> int:
    ref_pmf = _pmf_from(args.ref_hist, args.ref_mean, "--ref-mean/--ref-hist")
    blocked_pmf = _pmf_from(args.blocked_hist, args.blocked_mean,
                            "--blocked-mean/--blocked-hist")
    result = analysis.fidelity_threshold(ref_pmf, blocked_pmf)
    payload = _metrics_json(n_thr=result.threshold, c0=result.c0,
                            c1=result.c1, fidelity=result.fidelity)
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", payload)
    _say(args, f"threshold {result.threshold}: fidelity {result.fidelity:.4g} "
               f"(c0 {result.c0:.4g}, c1 {result.c1:.4g})")
    return 0


def cmd_analyze_storage(args, cfg: RunConfig) -> int:
    est = analysis.storage_bounds(args.p0, args.n_g)
    payload = _metrics_json(p0=est.p0, eta_lower=est.eta_lower,
                            eta_poisson=est.eta_poisson
                            if est.poisson_defined else None)
    out = _out_dir(args, cfg)
    _write_json(out / "metrics.json", payload)
    _say(args, f"eta >= {est.eta_lower:.4g}; Poissonian estimate "
               f"{est.eta_poisson:.4g}")
    return 0


# ---------------------------------------------------------------------------
# helpers

def _eit_params_from(args, cfg: RunConfig) -> EitParams:
    base = cfg.eit
    values = {
        "od": args.od if args.od is not None else base.od,
        "omega_c": args.omega_c if args.omega_c is not None else base.omega_c,
        "gamma_r": args.gamma_r if args.gamma_r is not None else base.gamma_r,
        "gamma_e": args.gamma_e if args.gamma_e is not None else base.gamma_e,
        "delta_c": args.delta_c if args.delta_c is not None else base.delta_c,
    }
    try:
        return EitParams(**values)
    except ValueError as exc:
        raise ConfigError(f"eit: {exc}") from exc


def _write_spectrum_csv(path: Path, spectrum: Spectrum) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("detuning_mhz,transmission\n")
        for d, t in zip(spectrum.detunings_mhz, spectrum.transmissions):
            fh.write(f"{format(d, '.12g')},{format(t, '.12g')}\n")


def _read_spectrum_csv(path: Path) -> Spectrum:
    det, trans = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "detuning_mhz,transmission":
            raise ConfigError(f"{path}: unexpected spectrum header {header!r}")
        for line in fh:
            if line.strip():
                d_s, t_s = line.strip().split(",")
                det.append(float(d_s))
                trans.append(float(t_s))
    return Spectrum(np.asarray(det), np.asarray(trans))


def _reference_from(args):
    if args.ref_hist:
        return _load(mc.ClickHistogram.from_csv, args.ref_hist)
    if args.ref_mean is not None:
        return float(args.ref_mean)
    raise ConfigError("provide --ref-hist or --ref-mean")


def _pmf_from(hist_path, mean, flag_name) -> np.ndarray:
    if hist_path:
        return _load(mc.ClickHistogram.from_csv, hist_path).pmf()
    if mean is not None:
        from .fitkit import poisson_pmf_vector
        kmax = int(np.ceil(mean + 12 * np.sqrt(mean + 1) + 25))
        return poisson_pmf_vector(float(mean), kmax)
    raise ConfigError(f"provide {flag_name}")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON configuration file")
    shared.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the configured RNG seed")
    shared.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="output directory (default from config)")
    shared.add_argument("--quiet", action="store_true",
                        default=argparse.SUPPRESS, help="suppress chatter")

    parser = argparse.ArgumentParser(
        prog="rydtrans",
        description="Rydberg-EIT photon-transistor simulation and analysis",
        parents=[shared])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("foerster", parents=[shared],
                       help="pair-state mismatch scan and zero crossings")
    p.add_argument("--n", default="60:80", help="inclusive n range, e.g. 60:80")
    p.add_argument("--channels", default="",
                   help="comma list like p12p12,p32p12 (default: all four)")
    p.set_defaults(func=cmd_foerster)

    p_eit = sub.add_parser("eit", help="EIT spectra and fits")
    eit_sub = p_eit.add_subparsers(dest="eit_command", required=True)
    for name, func, extra in (
            ("spectrum", cmd_eit_spectrum, True),
            ("fit", cmd_eit_fit, False)):
        q = eit_sub.add_parser(name, parents=[shared])
        q.add_argument("--od", type=float)
        q.add_argument("--omega-c", type=float, dest="omega_c")
        q.add_argument("--gamma-r", type=float, dest="gamma_r")
        q.add_argument("--gamma-e", type=float, dest="gamma_e")
        q.add_argument("--delta-c", type=float, dest="delta_c")
        if extra:
            q.add_argument("--grid", default="-6:6:481",
                           help="detuning grid low:high:points (MHz)")
        else:
            q.add_argument("--input", required=True, help="spectrum CSV to fit")
        q.set_defaults(func=func)

    p = sub.add_parser("simulate", parents=[shared],
                       help="Monte Carlo gate/target cycles")
    p.add_argument("--shots", type=int, required=True)
    p.add_argument("--gated", default="true",
                   help="true for gated runs, false for the reference")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="use a bundled experiment preset instead of the config")
    p.add_argument("--backend", choices=("numba", "numpy"),
                   help="sampling kernel (default: numba when available)")
    p.set_defaults(func=cmd_simulate)

    p_an = sub.add_parser("analyze", help="turn traces/histograms into metrics")
    an_sub = p_an.add_subparsers(dest="analyze_command", required=True)

    q = an_sub.add_parser("extinction", parents=[shared])
    q.add_argument("--gated", required=True, help="gated trace CSV")
    q.add_argument("--ref", required=True, help="reference trace CSV")
    q.add_argument("--n-g", type=float, dest="n_g", default=1.0)
    q.set_defaults(func=cmd_analyze_extinction)

    q = an_sub.add_parser("decay", parents=[shared])
    q.add_argument("--gated", required=True)
    q.add_argument("--ref", required=True)
    q.add_argument("--fit-start-us", type=float, dest="fit_start_us")
    q.set_defaults(func=cmd_analyze_decay)

    q = an_sub.add_parser("bimodal", parents=[shared])
    q.add_argument("--hist", required=True, help="gated histogram CSV")
    q.add_argument("--ref-hist", dest="ref_hist")
    q.add_argument("--ref-mean", type=float, dest="ref_mean")
    q.add_argument("--cut", type=float)
    q.add_argument("--scan", help="cutoff scan range low:high")
    q.set_defaults(func=cmd_analyze_bimodal)

    q = an_sub.add_parser("fidelity", parents=[shared])
    q.add_argument("--ref-hist", dest="ref_hist")
    q.add_argument("--ref-mean", type=float, dest="ref_mean")
    q.add_argument("--blocked-hist", dest="blocked_hist")
    q.add_argument("--blocked-mean", type=float, dest="blocked_mean")
    q.set_defaults(func=cmd_analyze_fidelity)

    q = an_sub.add_parser("storage", parents=[shared])
    q.add_argument("--p0", type=float, required=True)
    q.add_argument("--n-g", type=float, dest="n_g", default=1.0)
    q.set_defaults(func=cmd_analyze_storage)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("config", None), ("seed", None),
                          ("out_dir", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FitConvergenceError, IntegrationError, ValueError,
            RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

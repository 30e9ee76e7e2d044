"""``mrrlink`` command line: link budget, sensing and positioning runs, acceptance suite.

Scenario values are resolved in this order, later wins: built-in defaults,
preset overrides, ``--config`` file, ``--set`` flags, subcommand flags.
Every run writes ``manifest.txt`` next to its CSV output; passing that
manifest back through ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, presets
from .channel_model import gg_shape_params
from .config import Scenario, format_value, parse_assignments, read_config_text, split_assignment, write_manifest
from .errors import AccuracyRegimeViolation, ConfigError, FarFieldViolation
from .montecarlo import empirical_pdf
from .report import Table
from .sensing import (
    estimator_cdf,
    estimator_pdf,
    ml_estimate_R,
    overall_sensing_prob,
    mean_sensing_time,
    per_beam_sensing_prob,
    sensing_coefficients,
    variance_approx,
)
from .validation import CRITERIA, DEFAULT_SEED, SuiteContext, run_suite

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2

GLOBAL_FLAGS = ("config", "out", "seed", "workers", "set")


class UsageError(Exception):
    pass


def _add_global_flags(p: argparse.ArgumentParser, late: bool) -> None:
    # flags given after the subcommand land in "<name>_late" and win
    sfx = "_late" if late else ""
    default = argparse.SUPPRESS if late else None
    g = p.add_argument_group("global options")
    g.add_argument("--config", dest="config" + sfx, metavar="PATH", default=default,
                   help="scenario file of KEY = VALUE lines (a previous manifest.txt works)")
    g.add_argument("--out", dest="out" + sfx, metavar="DIR", default=default,
                   help="output directory for CSV files and manifest.txt (default: mrrlink_out)")
    g.add_argument("--seed", dest="seed" + sfx, metavar="U64", type=int, default=default,
                   help=f"master seed (default: run.seed from --config, else {DEFAULT_SEED})")
    g.add_argument("--workers", dest="workers" + sfx, metavar="N", type=int, default=default,
                   help="worker processes for Monte Carlo (results do not depend on it; default 1)")
    g.add_argument("--set", dest="set" + sfx, metavar="KEY=VALUE", action="append", default=default,
                   help="override one scenario key; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrrlink",
        description="Round-trip retroreflector satellite link: channel, sensing and positioning.",
    )
    parser.add_argument("--version", action="version", version=f"mrrlink {__version__}")
    _add_global_flags(parser, late=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    lb = sub.add_parser("linkbudget", help="print range, attenuation, turbulence and geometric losses")
    lb.add_argument("--json", action="store_true", help="print JSON instead of a CSV table")
    _add_global_flags(lb, late=True)

    sn = sub.add_parser("sense", help="sensing preset or single-point estimator evaluation")
    sn.add_argument("--preset", help="fig4, fig5, fig6, fig7, fig6_7 or appendix (or the full preset name)")
    sn.add_argument("--Ri", type=float, help="true beam offset R_i in metres for a single-point run")
    sn.add_argument("--wzs", type=float, help="sensing beamwidth at the satellite, metres (sets w_zs)")
    sn.add_argument("--Kd", type=int, help="coherence intervals per step (sets K_d)")
    sn.add_argument("--trials", type=int, help="Monte Carlo trials (single point default 10000; 0 skips the empirical PDF)")
    _add_global_flags(sn, late=True)

    ps = sub.add_parser("position", help="positioning MSE versus w_zp for both methods and the ideal benchmark")
    ps.add_argument("--preset", default=None, help="fig8 (default)")
    ps.add_argument("--Remb", type=float, help="ambiguity radius R_emb in metres; omit for the full figure family")
    ps.add_argument("--trials", type=int, help="trials per grid point (default 10000)")
    _add_global_flags(ps, late=True)

    va = sub.add_parser("validate", help="run the acceptance suite; exit 1 on any failure")
    va.add_argument("--only", metavar="N[,N...]", help="run only these criterion numbers (1-%d)" % len(CRITERIA))
    _add_global_flags(va, late=True)
    return parser


def _merge_globals(ns: argparse.Namespace) -> argparse.Namespace:
    for name in GLOBAL_FLAGS:
        late = getattr(ns, name + "_late", None)
        if late is None:
            continue
        if name == "set":
            ns.set = (ns.set or []) + late
        else:
            setattr(ns, name, late)
        delattr(ns, name + "_late")
    ns.set = ns.set or []
    return ns


# --------------------------------------------------------------------------
# scenario resolution


class Run:
    """Resolved scenario plus the run metadata that goes into the manifest."""

    def __init__(self, ns, preset_overrides=None, flag_overrides=None):
        pairs = [(k, format_value(v)) for k, v in (preset_overrides or {}).items()]
        file_meta = {}
        if ns.config is not None:
            path = Path(ns.config)
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
            file_pairs = read_config_text(text, str(path))
            _, file_meta = parse_assignments(file_pairs, source=str(path))
            pairs += file_pairs
        pairs += [split_assignment(s, "--set") for s in ns.set]
        pairs += [(k, format_value(v)) for k, v in (flag_overrides or {}).items()]
        values, _ = parse_assignments(pairs)
        self.scenario = Scenario(**values)
        self.file_meta = file_meta
        self.seed = ns.seed if ns.seed is not None else int(file_meta.get("run.seed", DEFAULT_SEED))
        self.workers = ns.workers if ns.workers is not None else 1
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        self.out = Path(ns.out if ns.out is not None else "mrrlink_out")
        self.meta: dict = {"command": ns.command, "seed": self.seed, "version": __version__}

    def from_file(self, key: str):
        return self.file_meta.get(f"run.{key}")

    def write(self, tables, params=None) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        for t in tables:
            t.write(self.out)
        run = {k: format_value(v) for k, v in self.meta.items()}
        for k, v in (params or {}).items():
            run[f"param.{k}"] = json.dumps(v) if isinstance(v, (list, tuple, dict)) else format_value(v)
        write_manifest(self.out / "manifest.txt", self.scenario, run)


def _trials(value, fallback) -> int:
    n = int(value) if value is not None else int(fallback)
    if n < 1:
        raise UsageError("trial count must be >= 1")
    return n


# --------------------------------------------------------------------------
# subcommands


def cmd_linkbudget(ns) -> int:
    run = Run(ns)
    scn = run.scenario
    link = scn.link()
    sigma_R2 = scn.rytov()
    alpha, beta = gg_shape_params(sigma_R2, scn.wave_model) if sigma_R2 > 0 else (float("inf"), float("inf"))
    ms, mp = scn.sensing_model(), scn.positioning_model()
    table = Table("linkbudget", ["quantity", "value", "unit"])
    table.add("Z", scn.Z, "m")
    table.add("h_L", link.h_L, "")
    table.add("sigma_R2", sigma_R2, "")
    table.add("alpha", alpha, "")
    table.add("beta", beta, "")
    table.add("h_pg_sensing", ms.h_pg, "")
    table.add("h_pg_positioning", mp.h_pg, "")
    table.add("h_ps_peak_sensing", ms.peak, "")
    table.add("h_ps_peak_positioning", mp.peak, "")
    run.write([table])
    if ns.json:
        print(json.dumps({q: v for q, v, _ in table.rows}, indent=2))
    else:
        sys.stdout.write(table.to_csv())
    return EXIT_OK


def _run_preset(ns, run_ctor, name: str, trials_flag, **extra) -> int:
    try:
        preset = presets.get_preset(name)
    except KeyError:
        raise UsageError(f"unknown preset {name!r}; choose from {', '.join(sorted(presets.ALIASES))}") from None
    run = run_ctor(preset.overrides)
    trials = _trials(trials_flag if trials_flag is not None else run.from_file("trials"), preset.default_trials)
    run.meta.update({"preset": preset.name, "trials": trials})
    result = preset.run(run.scenario, run.seed, run.workers, trials, **extra)
    run.write(result.tables, result.params)
    for c in result.checks:
        print(c.line())
    print(f"wrote {len(result.tables)} table(s) and manifest.txt to {run.out}")
    return EXIT_OK if result.passed else EXIT_CHECK_FAILED


def cmd_sense(ns) -> int:
    flags = {}
    if ns.wzs is not None:
        flags["w_zs"] = ns.wzs
    if ns.Kd is not None:
        flags["K_d"] = ns.Kd
    preset_name = ns.preset
    if preset_name is None and ns.Ri is None and ns.config is not None:
        # a manifest from an earlier run names its preset
        preset_name = _peek_meta(ns.config).get("run.preset")
    if preset_name is not None:
        if ns.Ri is not None:
            raise UsageError("--preset and --Ri are mutually exclusive")
        return _run_preset(ns, lambda ov: Run(ns, ov, flags), preset_name, ns.trials)
    run = Run(ns, None, flags)
    R_i = ns.Ri if ns.Ri is not None else run.from_file("Ri")
    if R_i is None:
        raise UsageError("sense needs --preset or --Ri")
    R_i = float(R_i)
    if R_i < 0:
        raise UsageError("--Ri must be >= 0")
    scn = run.scenario
    model = scn.sensing_model()
    sens = scn.sensing()
    trials_src = ns.trials if ns.trials is not None else run.from_file("trials")
    trials = int(trials_src) if trials_src is not None else 10_000
    if trials < 0:
        raise UsageError("trial count must be >= 0")
    run.meta.update({"Ri": R_i, "trials": trials})

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AccuracyRegimeViolation)
        p_i = per_beam_sensing_prob(sens, model)
        p_on = float(overall_sensing_prob(p_i, sens.N_m))
        N_aq, T_s = mean_sensing_time(sens, p_on) if p_on > 0 else (float("inf"), float("inf"))
        spread = 8.0 * max(np.sqrt(_estimator_var(R_i, model)), 1e-3)
        grid = np.linspace(max(0.0, R_i - spread), R_i + spread, 401)
        pdf = Table("sense_estimator_pdf", ["R_hat", "pdf_analytical", "cdf_analytical"])
        for x, f, F in zip(grid, estimator_pdf(grid, R_i, model), estimator_cdf(grid, R_i, model)):
            pdf.add(x, f, F)
        point = Table("sense_point", ["R_i", "w_zs", "K_d", "P_S_on_i", "P_s_on", "N_aq", "T_s"])
        point.add(R_i, model.w_z, model.K_d, p_i, p_on, N_aq, T_s)
        tables = [pdf, point]
        if trials > 0:
            _, P = presets.simulate_powers(model, (R_i,), trials, run.seed, run.workers)
            est = ml_estimate_R(P[:, 0], model, search_max=6 * sens.sigma_ge, tol=presets.DENSITY_ML_TOL)
            ok = np.isfinite(est)
            emp_table = Table("sense_empirical_pdf", ["R_hat_lo", "R_hat_hi", "pdf_empirical", "pdf_analytical"])
            if ok.any():
                emp = empirical_pdf(est[ok])
                for lo, hi, d, a in zip(emp.edges[:-1], emp.edges[1:], emp.density, estimator_pdf(emp.centers, R_i, model)):
                    emp_table.add(lo, hi, d, a)
            tables.append(emp_table)
    run.write(tables, {"ml_tol": presets.DENSITY_ML_TOL})
    sys.stdout.write(point.to_csv())
    print(f"wrote {len(tables)} table(s) and manifest.txt to {run.out}")
    return EXIT_OK


def _estimator_var(R_i, model) -> float:
    co = sensing_coefficients(model)
    s2 = model.gain**2 * float(variance_approx(R_i, model)) + model.noise_var
    slope = 2.0 * abs(co.A2) * model.gain * co.AA1 * max(R_i, 1.0) * np.exp(co.A2 * R_i * R_i)
    return s2 / slope**2 if slope > 0 else 1.0


def _peek_meta(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        return {}  # Run() reports the unreadable file
    return {k: v for k, v in read_config_text(text, str(path)) if k.startswith("run.")}


def cmd_position(ns) -> int:
    flags = {"R_emb": ns.Remb} if ns.Remb is not None else {}
    name = ns.preset or "fig8"
    if presets.ALIASES.get(name, name) != "fig8_positioning_mse":
        raise UsageError(f"position supports only the fig8 preset, got {name!r}")
    R_emb = ns.Remb
    if R_emb is None and ns.config is not None:
        R_emb = _peek_meta(ns.config).get("run.Remb")
    extra = {}
    if R_emb is not None:
        flags["R_emb"] = extra["R_emb"] = float(R_emb)

    def ctor(overrides):
        run = Run(ns, overrides, flags)
        if R_emb is not None:
            run.meta["Remb"] = run.scenario.R_emb
        return run

    return _run_preset(ns, ctor, name, ns.trials, **extra)


def cmd_validate(ns) -> int:
    only = None
    if ns.only:
        try:
            only = [int(x) for x in ns.only.split(",") if x.strip()]
        except ValueError:
            raise UsageError(f"--only expects comma-separated numbers, got {ns.only!r}") from None
        bad = [n for n in only if not 1 <= n <= len(CRITERIA)]
        if bad:
            raise UsageError(f"no acceptance criterion numbered {bad[0]}")
    run = Run(ns)
    run.meta["only"] = ns.only or "all"
    ctx = SuiteContext(seed=run.seed, workers=run.workers)
    results = run_suite(ctx, only, echo=print)
    table = Table("validation", ["criterion", "title", "check", "passed", "measured", "threshold"])
    for r in results:
        for c in r.checks:
            table.add(r.number, r.title, c.name, c.passed, c.measured, c.threshold)
    run.write([table])
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return EXIT_OK if n_fail == 0 else EXIT_CHECK_FAILED


COMMANDS = {
    "linkbudget": cmd_linkbudget,
    "sense": cmd_sense,
    "position": cmd_position,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = _merge_globals(parser.parse_args(argv))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FarFieldViolation)
            return COMMANDS[ns.command](ns)
    except (ConfigError, UsageError) as exc:
        print(f"mrrlink: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

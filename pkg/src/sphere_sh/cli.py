"""Command line: ``sphere-sh <subcommand> --config PATH [--seed U64] [--out DIR] [--quiet]``.

Exit codes: 0 success, 2 configuration error, 3 verification failure,
4 ensemble failure (every path overflowed, or a simulated path overflowed).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .diagnostics import energy_identity_residuals, khashminskii_report
from .dynamics import BlowUpError
from .manifold import gamma_identity_residuals
from .montecarlo import EnsembleFailure, run_ensemble, strong_order_estimate
from .spectral import norm_H, write_checkpoint
from .trajectory import picard_solve, run_trajectory

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_ENSEMBLE = 0, 2, 3, 4

TIMESERIES_COLUMNS = {
    "t": "time",
    "eta": "|u|_H^2 - 1, distance from the unit sphere",
    "energy_Y": "energy Y(u) = 1/2 ||u||_V^2 + 1/(2n) ||u||_L2n^2n",
    "norm_V": "||u||_V",
    "norm_L2n": "||u||_L2n",
    "x_norm": "path norm |u|_X at t (sup of ||u||_V^2 plus integral of |u|_E^2, square-rooted)",
}


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def write_plot_sidecar(path, columns: dict, title: str) -> None:
    lines = [f"title: {title}", f"data: {os.path.basename(path)}", "columns:"]
    lines += [f"  {i + 1} {name}: {desc}" for i, (name, desc) in enumerate(columns.items())]
    with open(os.fspath(path) + ".plot", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_csv(path, columns: dict, rows, comments=(), title="") -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
            for c in comments:
                fh.write(f"# {c}\n")
        write_plot_sidecar(path, columns, title or os.path.basename(path))
    except OSError as err:
        raise OSError(f"{path}: {err.strerror}") from None


def write_timeseries(diag, path) -> None:
    """CSV of the recorded diagnostics with tau hits as trailing comments."""
    arr = diag.as_arrays()
    rows = zip(arr["times"], arr["eta"], arr["energy_Y"], arr["norm_V"], arr["norm_L2n"], arr["x_norm"])
    comments = [f"tau_hit ell={_fmt(l)} t={_fmt(t)}"
                for l, t in sorted(diag.tau_hits.items()) if t is not None]
    write_csv(path, TIMESERIES_COLUMNS, rows, comments, "trajectory diagnostics")


def read_timeseries(path) -> dict:
    cols = list(TIMESERIES_COLUMNS)
    with open(path, encoding="utf-8") as fh:
        body = [line for line in fh.readlines()[1:] if line.strip() and not line.startswith("#")]
    if not body:
        return {c: np.empty(0) for c in cols}
    data = np.loadtxt(body, delimiter=",", ndmin=2)
    return {c: data[:, i] for i, c in enumerate(cols)}


class Output:
    def __init__(self, out_dir, quiet):
        self.dir = out_dir
        self.quiet = quiet
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.dir, name)

    def say(self, msg=""):
        if not self.quiet:
            print(msg)

    def text(self, name, lines):
        with open(self.path(name), "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


# -- subcommands -----------------------------------------------------------

def cmd_simulate(cfg: RunConfig, out: Output) -> int:
    u0 = cfg.initial_state()
    try:
        diag = run_trajectory(u0, cfg.T, cfg.params(), cfg.scheme_config(), cfg.noise(),
                              stride=cfg.stride, levels=cfg.ell_levels)
    except BlowUpError as err:
        write_timeseries(err.diagnostics, out.path("simulate.csv"))
        print(f"overflow at step {err.step}; partial record written", file=sys.stderr)
        return EXIT_ENSEMBLE
    write_timeseries(diag, out.path("simulate.csv"))
    write_checkpoint(diag.final_state, out.path("final_state.txt"))
    a = diag.as_arrays()
    out.say(f"simulate: {len(a['times'])} records to t = {_fmt(a['times'][-1])}")
    out.say(f"final eta = {_fmt(a['eta'][-1])}, Y = {_fmt(a['energy_Y'][-1])}, "
            f"||u||_V = {_fmt(a['norm_V'][-1])}")
    return EXIT_OK


def _ensemble_rows(est):
    return zip(est.times, est.mean_Y, est.se_Y, est.mean_eta, est.se_eta, est.mean_V, est.se_V)


_ENSEMBLE_COLUMNS = {
    "t": "time", "mean_Y": "sample mean of Y", "se_Y": "standard error of mean_Y",
    "mean_eta": "sample mean of eta", "se_eta": "standard error of mean_eta",
    "mean_V": "sample mean of ||u||_V", "se_V": "standard error of mean_V",
}


def cmd_ensemble(cfg: RunConfig, out: Output) -> int:
    try:
        est = run_ensemble(cfg.ensemble_config(), cfg.initial_state(), cfg.params(),
                           cfg.scheme_config(), cfg.noise())
    except EnsembleFailure as err:
        out.text("ensemble_status.txt", err.statuses)
        print(f"ensemble failed: {err}", file=sys.stderr)
        return EXIT_ENSEMBLE
    comments = [f"completed={est.completed} failed={est.failed}"]
    if est.conditional:
        comments.append("estimates are conditional on completion")
    write_csv(out.path("ensemble.csv"), _ENSEMBLE_COLUMNS, _ensemble_rows(est), comments,
              "ensemble means")
    out.text("ensemble_status.txt", [f"path {i}: {s}" for i, s in enumerate(est.statuses)])
    out.say(f"ensemble: {est.completed} completed, {est.failed} overflowed")
    out.say(f"E[Y(T)] = {_fmt(est.mean_Y[-1])} +- {_fmt(est.se_Y[-1])}")
    return EXIT_OK


def verification_suite(cfg: RunConfig):
    """Max relative residual of every identity over random on/off-sphere states."""
    space = cfg.space()
    params = cfg.params()
    rng = np.random.default_rng(cfg.seed)
    noise = cfg.noise().fields
    worst = {}
    for s in range(cfg.verify_samples):
        u = space.random(rng, decay=2.0)
        u = u / norm_H(u)
        if s % 2:
            u = u * rng.uniform(0.5, 1.5)
        f = noise[s % len(noise)] if noise else space.random(rng, decay=2.0)
        for r in gamma_identity_residuals(f, u, params.n) + energy_identity_residuals(f, u, params):
            worst[r.name] = max(worst.get(r.name, 0.0), r.relative)
    return worst


def cmd_verify(cfg: RunConfig, out: Output) -> int:
    worst = verification_suite(cfg)
    lines = []
    ok = True
    for name, r in worst.items():
        passed = r <= cfg.verify_tol
        ok &= passed
        lines.append(f"{name} {r:.3e} {cfg.verify_tol:.1e} {'PASS' if passed else 'FAIL'}")
    for line in lines:
        print(line)
    out.text("verify.txt", lines)
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_convergence(cfg: RunConfig, out: Output) -> int:
    ens = cfg.convergence_config()
    try:
        res = strong_order_estimate(ens, cfg.initial_state(), cfg.params(),
                                    cfg.scheme_config(), cfg.noise())
    except EnsembleFailure as err:
        print(f"convergence sweep failed: {err}", file=sys.stderr)
        return EXIT_ENSEMBLE
    cols = {"dt": "finer step of the compared pair",
            "mean_diff": "mean ||u_dt(T) - u_2dt(T)||_H over paths"}
    write_csv(out.path("convergence.csv"), cols, zip(res.dts, res.means),
              [res.summary()], "strong self-convergence")
    out.say(f"convergence ({cfg.scheme}, {ens.paths} paths): {res.summary()}")
    return EXIT_OK


def cmd_picard(cfg: RunConfig, out: Output) -> int:
    res = picard_solve(cfg.initial_state(), cfg.picard_T, cfg.params(), cfg.scheme_config(),
                       cfg.noise(), m=cfg.picard_m, tol=cfg.picard_tol,
                       max_iter=cfg.picard_max_iter)
    ratios = [float("nan")] + res.ratios
    cols = {"iteration": "Picard iteration j", "residual": "max_t ||u_{j+1} - u_j||_V",
            "ratio": "r_j / r_{j-1}"}
    rows = [(j + 1, r, q) for j, (r, q) in enumerate(zip(res.residuals, ratios))]
    write_csv(out.path("picard.csv"), cols, rows, [res.report()], "Picard residuals")
    out.say(res.report())
    return EXIT_OK


def cmd_khashminskii(cfg: RunConfig, out: Output) -> int:
    levels = cfg.ell_levels or (2.0, 4.0, 8.0, 16.0, 32.0)
    try:
        est = run_ensemble(cfg.ensemble_config(levels), cfg.initial_state(), cfg.params(),
                           cfg.scheme_config(), cfg.noise())
    except EnsembleFailure as err:
        out.text("khashminskii.txt", err.statuses)
        print(f"ensemble failed: {err}", file=sys.stderr)
        return EXIT_ENSEMBLE
    rep = khashminskii_report(est, levels, cfg.n, P=cfg.khashminskii_P)
    lines = [f"paths: {est.completed} completed, {est.failed} overflowed"] + rep.lines()
    out.text("khashminskii.txt", lines)
    for line in lines:
        out.say(line)
    return EXIT_OK if rep.passed else EXIT_VERIFY


COMMANDS = {
    "simulate": cmd_simulate,
    "ensemble": cmd_ensemble,
    "verify": cmd_verify,
    "convergence": cmd_convergence,
    "picard": cmd_picard,
    "khashminskii": cmd_khashminskii,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sphere-sh", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="suppress progress text")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "convergence":
            cfg.convergence_config()
        out = Output(cfg.out, args.quiet)
    except (ConfigError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    return COMMANDS[args.command](cfg, out)


if __name__ == "__main__":
    sys.exit(main())

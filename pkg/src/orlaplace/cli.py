"""Experiment runner.

Subcommands::

    orlaplace check    --config c.toml [--out DIR]
    orlaplace solve    --config c.toml [--out DIR]
    orlaplace verify   --config c.toml [--out DIR] [--threads K]
    orlaplace probe    --config c.toml [--out DIR] [--threads K]
    orlaplace plotdata --from table.csv [--out DIR]

Exit codes: 0 success / hypotheses satisfied, 1 config error, 2 a
hypothesis check failed, 3 the solver did not converge, 4 a
verification or probe expectation failed.

All tables are CSV with fixed header rows, written atomically
(temp + rename).  Independent jobs run on a thread pool; results are
keyed and written in sorted order, so outputs are byte-identical for
any --threads value.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import math
import os
import sys
import tempfile

import numpy as np

from . import olf
from .config import load_config
from .errors import ConfigError, OrlaplaceError
from .fields import Grid2D, ScalarField, dv_field_analytic, gradient, jacobian, v_field
from .orlicz import check_closeness, check_ratio, mollify
from .solver import solve
from .verify import (
    BallPair,
    ball_integral,
    caccioppoli_suite,
    divergence_evidence,
    diverges,
    fixtures,
    gehring_probe,
    pointwise_probe,
    stabilizes,
    threshold_bracketing_1d,
)

_EXIT_OK = 0
_EXIT_CONFIG = 1
_EXIT_CHECK_FAILED = 2
_EXIT_NO_CONVERGENCE = 3
_EXIT_VERIFY_FAILED = 4


def _fmt(v):
    """Shortest round-trip decimal form; deterministic across runs."""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pool_map(fn, keys, threads):
    """Evaluate fn over keys on a worker pool; results in key order."""
    if threads <= 1:
        return [fn(k) for k in keys]
    out = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
        futs = {pool.submit(fn, k): i for i, k in enumerate(keys)}
        for fut in concurrent.futures.as_completed(futs):
            out[futs[fut]] = fut.result()
    return [out[i] for i in range(len(keys))]


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------


def cmd_check(cfg, out_dir):
    rows, sample_rows = [], []
    all_ok = True
    for phi, psi in cfg.pairs:
        clo = check_closeness(phi, psi, cfg.dimension)
        rat = check_ratio(phi, psi)
        label = f"{phi.name}|{psi.name}"
        rows.append(
            (
                phi.name,
                psi.name,
                cfg.dimension,
                clo.s_theta,
                clo.threshold,
                clo.satisfied,
                rat.s_rho,
                rat.finite,
            )
        )
        for t, th in zip(clo.ts, clo.thetas):
            sample_rows.append((label, "theta", float(t), float(th)))
        for t, rh in zip(rat.ts, rat.rhos):
            sample_rows.append((label, "rho", float(t), float(rh)))
        all_ok &= clo.satisfied
        print(
            f"{label}: s_theta={clo.s_theta:.6g} threshold={clo.threshold:.6g} "
            f"satisfied={clo.satisfied} s_rho={rat.s_rho:.6g} ratio_finite={rat.finite}"
        )
    _write_csv(
        os.path.join(out_dir, "check.csv"),
        ["phi", "psi", "n", "s_theta", "threshold", "satisfied", "s_rho", "ratio_finite"],
        rows,
    )
    _write_csv(
        os.path.join(out_dir, "check_samples.csv"),
        ["pair", "series", "t", "value"],
        sample_rows,
    )
    return _EXIT_OK if all_ok else _EXIT_CHECK_FAILED


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def cmd_solve(cfg, out_dir):
    if cfg.problem is None:
        raise ConfigError("solve needs a [problem] section")
    os.makedirs(out_dir, exist_ok=True)
    phi = cfg.pairs[0][0]
    prob = cfg.problem.problem(phi)
    cfg.solver.diagnostics_path = os.path.join(out_dir, "diagnostics.csv")
    result = solve(prob, cfg.solver)
    olf.write_field(os.path.join(out_dir, "solution.olf"), result.u)
    print(
        f"solve[{phi.name}]: converged={result.converged} iterations={result.iterations} "
        f"residual={result.residual_history[-1]:.3e}"
    )
    return _EXIT_OK if result.converged else _EXIT_NO_CONVERGENCE


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _solve_levels(cfg, phi, levels):
    """Solutions (and sources) of the configured problem on halved grids."""

    def job(k):
        prob = cfg.problem.problem(phi, refinements=k)
        res = solve(prob, cfg.solver)
        if not res.converged:
            raise OrlaplaceError(f"level {k} solve did not converge")
        f = None if cfg.problem.source_is_zero() else prob.f
        return res.u, f

    return _pool_map(job, list(range(levels)), cfg.threads)


def cmd_verify(cfg, out_dir):
    if cfg.problem is None:
        raise ConfigError("verify needs a [problem] section")
    v = cfg.verify
    balls = [BallPair((b[0], b[1]), b[2]) for b in v["balls"]]
    cacc_rows, verdict_rows, gehring_rows = [], [], []
    failed = False

    levels_by_phi = {}
    for phi, psi in cfg.pairs:
        if phi.name not in levels_by_phi:
            levels_by_phi[phi.name] = _solve_levels(cfg, phi, int(v["levels"]))
        levels = levels_by_phi[phi.name]
        suite = caccioppoli_suite(
            phi,
            [psi],
            levels,
            balls,
            n=cfg.dimension,
            epsilon=cfg.problem.epsilon,
        )
        verdict_of = {(v.psi_name, v.ball.label()): v.verdict for v in suite.verdicts}
        for row in suite.rows:
            cacc_rows.append(
                (
                    row.phi_name,
                    row.psi_name,
                    row.h,
                    row.ball.label(),
                    row.report.lhs,
                    row.report.rhs_osc,
                    row.report.rhs_src,
                    row.report.empirical_C,
                    verdict_of[(row.psi_name, row.ball.label())],
                )
            )
        for ver in suite.verdicts:
            verdict_rows.append(
                (
                    "caccioppoli",
                    f"{ver.phi_name}|{ver.psi_name}",
                    ver.ball.label(),
                    "stable" if ver.stable else "unstable",
                    ver.verdict,
                )
            )
            failed |= ver.verdict == "FAIL"

        # reverse-Holder probe on the finest two levels
        (u_c, f_c), (u_f, f_f) = levels[-2], levels[-1]
        eps = cfg.problem.epsilon
        dv_c = dv_field_analytic(psi, u_c, eps)
        dv_f = dv_field_analytic(psi, u_f, eps)

        def _src(u, f):
            if f is None:
                return None
            g = gradient(u)
            s = np.sqrt(g.vx**2 + g.vy**2 + eps)
            return ScalarField(u.grid, psi.deriv(s) / phi.deriv(s) * f.values)

        probe = gehring_probe(
            (dv_c, _src(u_c, f_c)), (dv_f, _src(u_f, f_f)), balls, v["delta_grid"]
        )
        for delta, ball_label, level, r in probe.rows:
            gehring_rows.append((f"{phi.name}|{psi.name}", delta, ball_label, level, r))
        verdict_rows.append(
            (
                "gehring",
                f"{phi.name}|{psi.name}",
                "all",
                f"delta_star={probe.delta_star:g}",
                "PASS" if probe.delta_star > 0 else "FAIL",
            )
        )
        failed |= probe.delta_star <= 0

    fx = fixtures()
    if v["include_singular"]:
        lhs_levels = []
        r = float(v["singular_r"])
        for k in range(int(v["singular_levels"])):
            h = float(v["singular_h0"]) / 2**k
            grid = Grid2D(int(round(2.0 / h)) + 1, int(round(2.0 / h)) + 1, h, -1.0, -1.0)
            u = fx["saddle"].sample(grid)
            V = v_field(fx["unit_flux"], u, 0.0)
            DV = jacobian(V)
            lhs_levels.append(ball_integral(DV.frobenius_sq(), grid, (0.0, 0.0), r))
        grows = divergence_evidence(lhs_levels)
        for k, val in enumerate(lhs_levels):
            cacc_rows.append(
                ("saddle", "unit_flux", float(v["singular_h0"]) / 2**k, f"(0,0;r={r:g})",
                 val, 0.0, 0.0, math.inf, "DIVERGES" if grows else "FAIL")
            )
        verdict_rows.append(
            (
                "counterexample",
                "saddle|unit_flux",
                f"(0,0;r={r:g})",
                "diverges" if grows else "stabilizes",
                "PASS" if grows else "FAIL",
            )
        )
        failed |= not grows

    if v["include_threshold"]:
        p = float(v["threshold_p"])
        crit = -1.0 + (p - 1.0) / 2.0
        hs = [1 / 64, 1 / 128, 1 / 256, 1 / 512]
        for beta in v["threshold_betas"]:
            vals = threshold_bracketing_1d(p, float(beta), hs)
            expect_stable = float(beta) > crit
            got_stable = stabilizes(vals) and not diverges(vals)
            ok = got_stable == expect_stable
            verdict_rows.append(
                (
                    "threshold_1d",
                    f"p={p:g},beta={beta:g}",
                    "interval",
                    "stabilizes" if got_stable else "diverges",
                    "PASS" if ok else "FAIL",
                )
            )
            failed |= not ok

    _write_csv(
        os.path.join(out_dir, "caccioppoli.csv"),
        ["phi", "psi", "h", "ball", "lhs", "rhs_osc", "rhs_src", "empirical_C", "verdict"],
        cacc_rows,
    )
    _write_csv(
        os.path.join(out_dir, "gehring.csv"),
        ["pair", "delta", "ball", "level", "ratio"],
        gehring_rows,
    )
    _write_csv(
        os.path.join(out_dir, "verdicts.csv"),
        ["kind", "subject", "where", "evidence", "verdict"],
        verdict_rows,
    )
    for row in verdict_rows:
        print(" ".join(str(c) for c in row))
    return _EXIT_VERIFY_FAILED if failed else _EXIT_OK


# ---------------------------------------------------------------------------
# probe
# ---------------------------------------------------------------------------


def _probe_grid(cfg):
    box = cfg.problem.box if cfg.problem else (-1.0, 1.0, -1.0, 1.0)
    nx = int(cfg.probe["grid_nx"])
    h = (box[1] - box[0]) / (nx - 1)
    ny = int(round((box[3] - box[2]) / h)) + 1
    return Grid2D(nx, ny, h, box[0], box[2])


def _kappa_ladder(epsilon, steps):
    """Admissible tail of the ladder 0.1 * 2^-k below sqrt(epsilon)/2."""
    cap = 0.5 * math.sqrt(epsilon)
    k = 0
    while 0.1 * 2.0**-k >= cap:
        k += 1
    return [0.1 * 2.0 ** -(k + j) for j in range(steps)]


def cmd_probe(cfg, out_dir):
    grid = _probe_grid(cfg)
    fx = fixtures()
    rows = []
    failed = False
    jobs = []
    for phi, psi in cfg.pairs:
        for fname in cfg.probe["fixtures"]:
            for eps in cfg.probe["epsilons"]:
                for kappa in _kappa_ladder(float(eps), int(cfg.probe["kappa_steps"])):
                    jobs.append((phi, psi, fname, float(eps), kappa))

    def run(job):
        phi, psi, fname, eps, kappa = job
        field = fx[fname]
        phik = mollify(phi, kappa)
        psik = mollify(psi, kappa)
        if cfg.probe["z"] == "mean":
            u = field.sample(grid)
            V = v_field(psik, u, eps)
            Z = (float(np.mean(V.vx)), float(np.mean(V.vy)))
        else:
            Z = (float(cfg.probe["z"][0]), float(cfg.probe["z"][1]))
        probe = pointwise_probe(field, phik, psik, eps, Z, grid, n=int(cfg.probe["dimension"]))
        return probe

    results = _pool_map(run, jobs, cfg.threads)
    first_dump = True
    for (phi, psi, fname, eps, kappa), probe in zip(jobs, results):
        ok = probe.fitted_c > 0.0
        rows.append(
            (
                fname,
                phi.name,
                psi.name,
                eps,
                kappa,
                probe.s_gamma,
                probe.fitted_c,
                probe.fitted_C,
                "PASS" if ok else "FAIL",
            )
        )
        failed |= not ok
        if cfg.probe["dump_densities"] and first_dump:
            olf.write_field(os.path.join(out_dir, "probe_lhs.olf"), probe.lhs_density)
            olf.write_field(os.path.join(out_dir, "probe_div.olf"), probe.div_term)
            olf.write_field(os.path.join(out_dir, "probe_src.olf"), probe.src_term)
            first_dump = False

    _write_csv(
        os.path.join(out_dir, "probe.csv"),
        ["fixture", "phi", "psi", "epsilon", "kappa", "s_gamma", "fitted_c", "fitted_C", "verdict"],
        rows,
    )
    for row in rows:
        print(" ".join(str(c) for c in row))
    return _EXIT_VERIFY_FAILED if failed else _EXIT_OK


# ---------------------------------------------------------------------------
# plotdata
# ---------------------------------------------------------------------------


def cmd_plotdata(src_path, out_dir):
    with open(src_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = []
    if header == ["pair", "series", "t", "value"]:
        # hypothesis-check samples: pass the numeric strings through untouched
        for pair, series, t, value in rows:
            out.append((t, value, f"{pair}/{series}"))
    elif header == ["iter", "energy", "residual", "step_length"]:
        for it, energy, residual, _ in rows:
            out.append((it, energy, "energy"))
            out.append((it, residual, "residual"))
    elif header[:4] == ["phi", "psi", "h", "ball"]:
        for row in rows:
            series = f"{row[0]}|{row[1]}|{row[3]}"
            out.append((row[2], row[4], f"{series}/lhs"))
            out.append((row[2], row[7], f"{series}/empirical_C"))
    else:
        raise ConfigError(f"unrecognised table header: {header}")
    out.sort(key=lambda r: r[2])
    _write_csv(os.path.join(out_dir, "plotdata.csv"), ["x", "y", "series"], out)
    return _EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="orlaplace", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("check", "solve", "verify", "probe"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("plotdata")
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--out", default="out")

    args = parser.parse_args(argv)
    try:
        if args.command == "plotdata":
            return cmd_plotdata(args.src, args.out)
        cfg = load_config(args.config)
        cfg.threads = max(1, args.threads)
        cfg.seed = args.seed
        out_dir = args.out or cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        if args.command == "check":
            return cmd_check(cfg, out_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        if args.command == "verify":
            return cmd_verify(cfg, out_dir)
        if args.command == "probe":
            return cmd_probe(cfg, out_dir)
        raise AssertionError("unreachable")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except OrlaplaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VERIFY_FAILED


if __name__ == "__main__":
    sys.exit(main())

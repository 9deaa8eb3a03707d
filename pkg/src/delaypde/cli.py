"""Command-line front end.

    delaypde eigs|synth|certify|simulate|sweep --config FILE [--out DIR]
             [--export-sdpa N] [--h H1,H2,...]

Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 no certificate found (certify only).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import svg
from .certify import AlphaSet, build_problem, certify, export_sdpa, revalidate, save_certificate
from .config import RunConfig, load_config, parse_number
from .errors import NumericalError, ValidationError
from .model import build_reduction, choose_N0
from .sim import (estimate_decay_rate, reconstruct_field, simulate_closed_loop,
                  write_field_csv, write_trajectory_csv)
from .spectral import compute_eigenbasis, validate_weyl_bounds
from .synth import synthesize_gains, verify_gains

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_INFEASIBLE = 0, 1, 2, 3


def _fmt(v) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: list[str], rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


class Pipeline:
    """Shared setup: plant, eigenbasis, reduction and gains."""

    def __init__(self, cfg: RunConfig, h: float | None = None):
        self.cfg = cfg
        self.plant = cfg.plant_config(h)
        nu = cfg.numerics
        self.basis = compute_eigenbasis(self.plant.sl, nu.n_modes, richardson=nu.richardson)
        self.reduction = build_reduction(self.plant, self.basis)
        self.N0 = choose_N0(self.basis, self.plant.sl.q_c, self.plant.c)

    def gains(self):
        ga = self.cfg.gains
        if ga.mode == "place":
            rep = synthesize_gains(self.plant, self.basis, self.reduction, self.N0,
                                   ga.poles_K, ga.poles_L)
        else:
            if len(ga.K) != self.N0:
                raise ValidationError(f"[gains] K has {len(ga.K)} entries but N0 = {self.N0}")
            rep = verify_gains(self.plant, self.basis, self.reduction, ga.K, ga.L, self.N0)
        if not rep.ok:
            raise ValidationError(
                f"gains violate Re mu < -|c|: rightmost pole {np.max(rep.spectrum.real):.6g}"
            )
        return rep

    def alphas(self) -> AlphaSet:
        nu, c = self.cfg.numerics, abs(self.plant.c)
        return AlphaSet(nu.alpha1 or 4 * c, nu.alpha2, nu.alpha3, nu.alpha4 or 4 * c, c)

    def epsilon(self):
        return self.cfg.numerics.epsilon if self.plant.measurement.value == "neumann" else None

    def observer_order(self) -> int:
        n = self.cfg.numerics.observer_order
        return n if n > 0 else self.N0 + 1


def _prepare_out(cfg: RunConfig, out: str | None) -> Path:
    d = Path(out) if out else Path(cfg.output.directory)
    if not d.is_absolute() and not out:
        d = cfg.base_dir / d
    d.mkdir(parents=True, exist_ok=True)
    (d / "effective_config.ini").write_text(cfg.to_ini())
    return d


def cmd_eigs(cfg: RunConfig, out: Path) -> int:
    # only the operator is needed here, so q = 0 is allowed
    sl = cfg.sl_problem()
    b = compute_eigenbasis(sl, cfg.numerics.n_modes, richardson=cfg.numerics.richardson)
    N0 = choose_N0(b, sl.q_c, cfg.plant.c)
    p_low, p_high, q_high = sl.bounds()
    rep = validate_weyl_bounds(b, p_low, p_high, q_high, cfg.numerics.weyl_rtol)
    raw = b.raw_lambdas if b.raw_lambdas is not None else b.lambdas
    _write_csv(out / "eigenvalues.csv", ["n", "lambda", "lambda_raw", "weyl_lower", "weyl_upper", "weyl_ok"],
               ([n + 1, b.lambdas[n], raw[n], rep.lower[n], rep.upper[n], str(int(rep.passed[n]))]
                for n in range(len(b))))
    _write_csv(out / "traces.csv", ["n", "phi_0", "dphi_0", "phi_1", "dphi_1"],
               ([n + 1, *b.traces[n]] for n in range(len(b))))
    lines = [f"modes computed: {len(b)}", f"grid points: {b.grid.size}",
             f"bounds: p_low={p_low:.17g} p_high={p_high:.17g} q_high={q_high:.17g}",
             f"N0 = {N0}",
             "Weyl bounds: " + ("pass" if rep.ok else f"FAIL at modes {rep.failures}")]
    (out / "weyl_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if rep.ok else EXIT_NUMERIC


def cmd_synth(cfg: RunConfig, out: Path) -> int:
    pipe = Pipeline(cfg)
    rep = pipe.gains()
    header = f"mode = {cfg.gains.mode}\n"
    (out / "gains_report.txt").write_text(header + rep.text())
    (out / "gains.ini").write_text(
        "[gains]\nmode = given\n"
        f"K = {', '.join(_fmt(v) for v in rep.K.ravel())}\n"
        f"L = {', '.join(_fmt(v) for v in rep.L.ravel())}\n"
    )
    print(header + rep.text(), end="")
    return EXIT_OK


def cmd_certify(cfg: RunConfig, out: Path, export_n: int | None = None) -> int:
    pipe = Pipeline(cfg)
    rep = pipe.gains()
    alphas = pipe.alphas()
    nu = cfg.numerics
    if nu.N_max + 2 > len(pipe.basis):
        raise ValidationError(f"[numerics] n_modes={len(pipe.basis)} must exceed N_max + 1 = {nu.N_max + 1}")
    res = certify(pipe.plant, pipe.basis, pipe.reduction, rep.K, rep.L, alphas=alphas,
                  N_max=nu.N_max, epsilon=pipe.epsilon(), N0=pipe.N0)
    _write_csv(out / "certify_trace.csv", ["N", "constructive_score", "refined_score", "feasible"],
               ([N, s0, s1, str(int(f))] for N, s0, s1, f in res.trace))
    lines = [f"measurement: {pipe.plant.measurement.value}", f"N0 = {pipe.N0}",
             f"alphas = {alphas.alpha1:.6g}, {alphas.alpha2:.6g}, {alphas.alpha3:.6g}, "
             f"{alphas.alpha4:.6g} (c_frak = {alphas.c_frak:.6g})"]
    if export_n is not None:
        if not pipe.N0 + 1 <= export_n < len(pipe.basis):
            raise ValidationError(f"--export-sdpa N must lie in [{pipe.N0 + 1}, {len(pipe.basis) - 1}]")
        prob = build_problem(pipe.plant, pipe.basis, pipe.reduction, rep.K, rep.L, pipe.N0,
                             export_n, alphas, pipe.epsilon())
        path = export_sdpa(prob, out / f"certify_N{export_n}.dat-s")
        lines.append(f"SDPA problem written: {path.name}")
    if res.N_feasible is None:
        lines.append(f"no feasible order found for N <= {nu.N_max}")
        if res.certificate is not None:
            save_certificate(res.certificate, res.problem, out / "best_candidate.json")
            lines.append(f"best score {res.certificate.score:.6g} at N = {res.certificate.N}")
        (out / "certify_report.txt").write_text("\n".join(lines) + "\n")
        print("\n".join(lines))
        return EXIT_INFEASIBLE
    cert = res.certificate
    ok, dev = revalidate(res.problem, cert)
    save_certificate(cert, res.problem, out / "certificate.json")
    lines.append(f"feasible at N = {res.N_feasible}")
    lines.append(f"revalidation: {'pass' if ok else 'FAIL'} (max relative margin deviation {dev:.3g})")
    lines.append("margins (value / required gap):")
    for k in cert.margins:
        lines.append(f"  {k:8s} {cert.margins[k]:.6g} / {cert.gaps[k]:.3g}")
    (out / "certify_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK if ok else EXIT_NUMERIC


def _run_single(cfg: RunConfig, pipe: Pipeline, rep, h: float, out: Path, plots: bool,
                T_final: float | None = None):
    plant = cfg.plant_config(h)
    simcfg = cfg.sim_config(T_final)
    N = pipe.observer_order()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj = simulate_closed_loop(plant, pipe.basis, pipe.reduction, rep.K, rep.L, pipe.N0, N, simcfg)
    notes = [str(w.message) for w in caught]
    o = cfg.output
    write_trajectory_csv(traj, out / "trajectory.csv", o.csv_modes, o.csv_stride)
    T = traj.times[-1]
    fit = estimate_decay_rate(traj.times, traj.h1_sq, cfg.numerics.fit_start * T, T)
    ts, xs, zf = reconstruct_field(traj, pipe.basis, simcfg, "state", plant, t_stride=o.field_stride)
    _, _, ef = reconstruct_field(traj, pipe.basis, simcfg, "error", t_stride=o.field_stride)
    if "csv" in o.formats:
        write_field_csv(ts, xs, zf, out / "state_field.csv")
        write_field_csv(ts, xs, ef, out / "error_field.csv")
    if plots and "svg" in o.formats:
        svg.heatmap(ts, xs, zf, out / "state_field.svg", f"state z(t,x), h = {h:g}")
        svg.heatmap(ts, xs, ef, out / "error_field.svg", f"observation error e(t,x), h = {h:g}")
        svg.log_lines([(f"h = {h:g}", traj.times, np.sqrt(traj.h1_sq))], out / "h1_norm.svg",
                      "H1-equivalent norm", "norm")
    summary = {"h": h, "N0": pipe.N0, "N": N, "M": traj.M, "dt": traj.dt,
               "delta_hat": fit.delta, "fit_residual": fit.residual,
               "rate_residual": fit.rate_residual, "fit_window": [fit.t_start, fit.t_end],
               "h1_peak": float(np.max(traj.h1_sq)), "h1_final": float(traj.h1_sq[-1]),
               "error_peak": float(np.max(traj.error_sq)), "error_final": float(traj.error_sq[-1]),
               "stopped_early": traj.stopped_early, "notes": notes}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary, traj.times, traj.h1_sq


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    pipe = Pipeline(cfg)
    rep = pipe.gains()
    s, _, _ = _run_single(cfg, pipe, rep, cfg.plant.h, out, plots=True)
    for n in s["notes"]:
        print("note:", n)
    print(f"h = {s['h']:g}: delta_hat = {s['delta_hat']:.6g} (fit residual {s['fit_residual']:.3g}), "
          f"H1 energy final/peak = {s['h1_final'] / s['h1_peak']:.3g}")
    return EXIT_NUMERIC if s["stopped_early"] else EXIT_OK


def _sweep_worker(args):
    cfg, pipe, rep, h, out = args
    out.mkdir(parents=True, exist_ok=True)
    T = max(cfg.numerics.T_final, cfg.numerics.sweep_T_scale * h)
    s, t, e = _run_single(cfg, pipe, rep, h, out, plots=False, T_final=T)
    return s, t, e


def _threads() -> int:
    raw = os.environ.get("DELAYPDE_THREADS", "")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"DELAYPDE_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise ValidationError("DELAYPDE_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def cmd_sweep(cfg: RunConfig, out: Path, h_list=None) -> int:
    hs = tuple(h_list) if h_list else cfg.numerics.sweep_h
    if not hs:
        raise ValidationError("empty delay list")
    pipe = Pipeline(cfg)
    rep = pipe.gains()
    jobs = [(cfg, pipe, rep, h, out / f"h_{h:g}") for h in hs]
    n = min(_threads(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            results = list(ex.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]
    rows = [[s["h"], s["delta_hat"], s["fit_residual"], s["rate_residual"], s["h1_final"] / s["h1_peak"]]
            for s, _, _ in results]
    _write_csv(out / "decay_rates.csv", ["h", "delta_hat", "fit_residual", "rate_residual", "h1_final_over_peak"], rows)
    if "svg" in cfg.output.formats:
        svg.log_lines([(f"h = {s['h']:g}", t, np.sqrt(e)) for s, t, e in results],
                      out / "h1_overlay.svg", "H1-equivalent norm for several delays", "norm")
    deltas = [r[1] for r in rows]
    for r in rows:
        print(f"h = {r[0]:g}: delta_hat = {r[1]:.6g} (fit residual {r[2]:.3g}, rate residual {r[3]:.3g})")
    order = np.argsort(hs)
    mono = all(deltas[order[i]] > deltas[order[i + 1]] for i in range(len(order) - 1))
    print("decay rate strictly decreasing in h:", "yes" if mono else "no")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delaypde",
                                 description="Output-feedback stabilization of delayed reaction-diffusion PDEs")
    ap.add_argument("command", choices=["eigs", "synth", "certify", "simulate", "sweep"])
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--export-sdpa", type=int, metavar="N", help="certify: also write the SDPA problem at order N")
    ap.add_argument("--h", help="sweep: comma-separated delays (overrides [numerics] sweep_h)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = _prepare_out(cfg, args.out)
        if args.command == "eigs":
            return cmd_eigs(cfg, out)
        if args.command == "synth":
            return cmd_synth(cfg, out)
        if args.command == "certify":
            return cmd_certify(cfg, out, args.export_sdpa)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        h_list = None
        if args.h:
            h_list = [float(parse_number(t, "--h")) for t in args.h.split(",") if t.strip()]
            cfg = replace(cfg, numerics=replace(cfg.numerics, sweep_h=tuple(h_list)))
            (out / "effective_config.ini").write_text(cfg.to_ini())
        return cmd_sweep(cfg, out, h_list)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

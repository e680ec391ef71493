"""Command line entry point: ``realginibre <subcommand> [options]``.

Every run gets its own directory (``--out``, or a fresh directory under
``$REALGINIBRE_OUT``, default ``./runs``) holding ``manifest.json`` (written
first, updated at the end) and typed CSV / JSON-lines data files.

Exit codes: 0 success, 2 usage error, 3 numerical failure.  Failures print a
JSON error record on stderr and also leave it in ``error.json``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .core import (ParityError, RunManifest, SpectralConfiguration, SpectrumError, Stopwatch,
                   check_parity, k_for_alpha, load_configurations_jsonl)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
OUT_ENV = "REALGINIBRE_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, EXIT_USAGE, None)
        sys.exit(EXIT_USAGE)


def _emit_error(kind: str, message: str, code: int, out: Path | None, extra: dict | None = None):
    rec = {"error": kind, "message": message, "exit_code": code, **(extra or {})}
    sys.stderr.write(json.dumps(rec) + "\n")
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(rec, indent=2))
        except OSError:
            pass


def _run_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{args.command}-{stamp}"
    d, i = base, 1
    while d.exists():
        d = Path(f"{base}-{i}")
        i += 1
    return d


def _resolve_k(args) -> int:
    if args.k is not None:
        k = args.k
    elif args.alpha is not None:
        if not 0.0 <= args.alpha <= 1.0:
            raise UsageError(f"alpha must lie in [0, 1], got {args.alpha}")
        k = k_for_alpha(args.alpha, args.n)
    else:
        raise UsageError("give --k or --alpha")
    try:
        check_parity(args.n, k)
    except ParityError as e:
        raise UsageError(str(e)) from None
    return k


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(type(o).__name__)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, default=_json_default, sort_keys=True))


def _analysis_files(ens, out: Path, outputs: dict, bins: int = 40) -> dict:
    from . import analysis

    summary = {}
    h = analysis.real_histogram(ens, bins=bins)
    h.to_csv(out / "histogram.csv")
    outputs["histogram"] = "histogram.csv"
    summary["real_mass"] = h.mass
    snaps = analysis.snapshots(ens)
    if any(s.uppers.size for s in snaps):
        summary["axis_gap"] = analysis.axis_gap(ens)
        try:
            sup = analysis.complex_support(ens)
        except SpectrumError as e:
            summary["support_error"] = str(e)
        else:
            sup.to_csv(out / "boundary.csv")
            outputs["boundary"] = "boundary.csv"
            summary.update(support_area=sup.area, support_min_y=sup.min_y, flatness=sup.flatness,
                           centroid=[sup.centroid.real, sup.centroid.imag])
    if all(s.reals.size >= 3 for s in snaps):
        summary["gap_cv"] = analysis.ensemble_gap_cv(ens)
    return summary


# -- subcommands ----------------------------------------------------------------

def cmd_gas(args, out: Path, man: RunManifest) -> dict:
    from .core import GasParams, STREAM_GAS_INIT, rng_stream, to_measure
    from .gasdyn import evolve, initial_configuration, relax_to_minimum
    from .potential import total_energy
    from .ratefn import rate_function

    k = _resolve_k(args)
    if args.sigma < 0:
        raise UsageError("sigma must be nonnegative")
    if args.dt <= 0 or args.steps < 0:
        raise UsageError("need dt > 0 and steps >= 0")
    man.parameters["k"] = k
    c0 = initial_configuration(args.n, k, rng_stream(args.seed, STREAM_GAS_INIT))
    outputs = man.outputs
    if args.mode == "minimize":
        cfg, stats = relax_to_minimum(c0, grad_tol=args.grad_tol, flow_steps=min(args.steps, 2000))
        ens = cfg
    else:
        params = GasParams(n=args.n, k=k, sigma=args.sigma, dt=args.dt, steps=args.steps, seed=args.seed)
        tr = evolve(c0, params, args.mode, snapshot_every=args.snapshot_every,
                    experimental=args.experimental,
                    grad_tol=args.grad_tol if args.mode == "deterministic" else None)
        tr.write_jsonl(out / "trajectory.jsonl")
        tr.write_csv(out / "energies.csv")
        outputs.update(trajectory="trajectory.jsonl", energies="energies.csv")
        cfg, stats = tr.final, tr.stats
        ens = tr if args.mode == "stochastic" else cfg
    (out / "final.json").write_text(cfg.to_json())
    outputs["final"] = "final.json"
    summary = {"stats": stats, "energy": total_energy(cfg).total,
               "rate": rate_function(to_measure(cfg)).rate_value}
    summary.update(_analysis_files(ens, out, outputs, args.bins))
    return summary


def cmd_mcmc(args, out: Path, man: RunManifest) -> dict:
    from .mcmc import chain_ess, sample_chain, write_summary_csv

    k = _resolve_k(args)
    man.parameters["k"] = k
    if args.steps < 0 or args.burn_in < 0 or args.thin < 1:
        raise UsageError("need steps >= 0, burn-in >= 0, thin >= 1")
    trace = max(1, args.steps // 200)
    chains = [sample_chain(args.n, k, args.steps, args.burn_in, args.thin, seed=args.seed + c,
                           trace_every=trace) for c in range(args.chains)]
    with open(out / "samples.jsonl", "w") as fh:
        for ci, ch in enumerate(chains):
            for i in range(len(ch)):
                fh.write(json.dumps({"chain": ci, "step": int(ch.steps[i]),
                                     "log_target": float(ch.log_target[i]), **ch[i].to_dict()}) + "\n")
    write_summary_csv(out / "summary.csv", chains)
    man.outputs.update(samples="samples.jsonl", summary="summary.csv")
    summary = {"chains": [{k2: v for k2, v in ch.summary.items() if k2 != "trace"} for ch in chains]}
    if all(len(ch) > 10 for ch in chains):
        summary["ess"] = [chain_ess(ch) for ch in chains]
    ens = [c for ch in chains for c in ch] if len(chains) > 1 else chains[0]
    if sum(len(ch) for ch in chains):
        summary.update(_analysis_files(ens, out, man.outputs, args.bins))
    man.extra["acceptance"] = [ch.summary["accept_rate"] for ch in chains]
    return summary


def cmd_oracle(args, out: Path, man: RunManifest) -> dict:
    from .matrix_oracle import conditional_ensemble, estimate_pnk, save_spectra_jsonl

    if args.n < 1 or args.trials < 1:
        raise UsageError("need n >= 1 and trials >= 1")
    if args.k is not None:
        try:
            check_parity(args.n, args.k)
        except ParityError as e:
            raise UsageError(str(e)) from None
        spectra = conditional_ensemble(args.n, args.k, args.trials, seed=args.seed)
        save_spectra_jsonl(out / "spectra.jsonl", spectra)
        man.outputs["spectra"] = "spectra.jsonl"
        summary = {"accepted": len(spectra), "acceptance": len(spectra) / args.trials}
        summary.update(_analysis_files(spectra, out, man.outputs, args.bins))
        return summary
    pmf = estimate_pnk(args.n, args.trials, seed=args.seed)
    pmf.to_csv(out / "pmf.csv")
    man.outputs["pmf"] = "pmf.csv"
    return {"pmf": {str(k): pmf.probability(k) for k in sorted(pmf.counts)},
            "mean_real": pmf.mean(), "mean_real_stderr": pmf.mean_stderr(), "trials": pmf.trials}


def _alpha_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"bad alpha list {text!r}") from None
    if not vals or any(not 0.0 <= a <= 1.0 for a in vals):
        raise UsageError("alpha values must lie in [0, 1]")
    return vals


def cmd_rate(args, out: Path, man: RunManifest) -> dict:
    from .ratefn import minimum_estimate, write_rate_csv

    alphas = _alpha_list(args.alpha_list)
    if args.n < 8:
        raise UsageError("need at least 8 particles")
    reports = [minimum_estimate(a, args.n, seed=args.seed) for a in alphas]
    write_rate_csv(out / "rate.csv", reports)
    man.outputs["rate"] = "rate.csv"
    return {"rates": [r.to_dict() for r in reports]}


def cmd_ystar(args, out: Path, man: RunManifest) -> dict:
    from .ratefn import solve_ystar

    if args.quadrature_points < 100:
        raise UsageError("quadrature points must be >= 100")
    y = solve_ystar(args.quadrature_points)
    _write_json(out / "ystar.json", {"ystar": y, "quadrature_points": args.quadrature_points})
    man.outputs["ystar"] = "ystar.json"
    print(f"{y:.12f}")
    return {"ystar": y}


def _load_ensemble(path: Path):
    from .matrix_oracle import load_spectra_jsonl

    if not path.exists():
        raise UsageError(f"no such input {path}")
    text = path.read_text()
    first = text.lstrip().split("\n", 1)[0]
    if not first:
        raise UsageError("empty input")
    rec = json.loads(first)
    if "eigenvalues" in rec:
        return load_spectra_jsonl(path)
    if path.suffix == ".jsonl":
        return load_configurations_jsonl(path)
    return [SpectralConfiguration.from_json(text)]


def cmd_analyze(args, out: Path, man: RunManifest) -> dict:
    ens = _load_ensemble(Path(args.input))
    return _analysis_files(ens, out, man.outputs, args.bins)


COMMANDS = {"gas": cmd_gas, "mcmc": cmd_mcmc, "oracle": cmd_oracle, "rate": cmd_rate,
            "ystar": cmd_ystar, "analyze": cmd_analyze}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="realginibre", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help=f"run directory (default: a new directory under ${OUT_ENV})")
        sp.add_argument("--threads", type=int, default=1, help="numba thread cap")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--bins", type=int, default=40, help="real-axis histogram bins")

    g = sub.add_parser("gas", help="run the two-phase gas")
    common(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--alpha", type=float)
    g.add_argument("--k", type=int)
    g.add_argument("--mode", choices=["deterministic", "stochastic", "minimize"], default="deterministic")
    g.add_argument("--steps", type=int, default=10_000)
    g.add_argument("--dt", type=float, default=1e-2)
    g.add_argument("--sigma", type=float, default=math.sqrt(2.0))
    g.add_argument("--grad-tol", type=float, default=1e-7)
    g.add_argument("--snapshot-every", type=int)
    g.add_argument("--experimental", action="store_true", help="allow sigma^2 > 2")

    m = sub.add_parser("mcmc", help="Metropolis-Hastings chains")
    common(m)
    m.add_argument("--n", type=int, required=True)
    m.add_argument("--k", type=int)
    m.add_argument("--alpha", type=float)
    m.add_argument("--steps", type=int, default=100_000)
    m.add_argument("--burn-in", type=int, default=10_000)
    m.add_argument("--thin", type=int, default=100)
    m.add_argument("--chains", type=int, default=1)

    o = sub.add_parser("oracle", help="random-matrix real-eigenvalue counts")
    common(o)
    o.add_argument("--n", type=int, required=True)
    o.add_argument("--trials", type=lambda s: int(float(s)), default=100_000)
    o.add_argument("--k", type=int, help="collect the conditional ensemble with k real eigenvalues")

    r = sub.add_parser("rate", help="constrained minimum of the rate function")
    common(r)
    r.add_argument("--alpha", dest="alpha_list", default="0,0.25,0.5,0.75,1",
                   help="comma-separated alpha values")
    r.add_argument("--n", type=int, default=1000, help="particles of the larger relaxation")

    y = sub.add_parser("ystar", help="solve the y* equation")
    common(y, seed=False)
    y.add_argument("--quadrature-points", type=int, default=200)

    a = sub.add_parser("analyze", help="histogram / support / gaps of saved data")
    common(a, seed=False)
    a.add_argument("--input", required=True, help="configuration JSON, trajectory or samples JSONL, spectra JSONL")
    return p


def _parameters(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("command", "out")}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _run_dir(args)
    try:
        if args.threads < 1:
            raise UsageError("threads must be >= 1")
        import numba

        if "NUMBA_THREADING_LAYER" not in os.environ:
            numba.config.THREADING_LAYER = "workqueue"
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        out.mkdir(parents=True, exist_ok=True)
        man = RunManifest(command=args.command, parameters=_parameters(args), seed=getattr(args, "seed", None))
        man.write(out)
        clock = Stopwatch()
        summary = COMMANDS[args.command](args, out, man)
        _write_json(out / "summary.json", summary)
        man.outputs["summary_json"] = "summary.json"
        man.duration = clock.elapsed()
        man.status = "ok"
        man.write(out)
    except UsageError as e:
        _emit_error("usage", str(e), EXIT_USAGE, out)
        _mark_failed(out, "usage")
        return EXIT_USAGE
    except (SpectrumError, FloatingPointError, ArithmeticError) as e:
        extra = {"pair": list(e.pair)} if getattr(e, "pair", None) is not None else {}
        _emit_error(type(e).__name__, str(e), EXIT_NUMERICAL, out, extra)
        _mark_failed(out, "numerical")
        return EXIT_NUMERICAL
    except ValueError as e:
        _emit_error("usage", str(e), EXIT_USAGE, out)
        _mark_failed(out, "usage")
        return EXIT_USAGE
    return EXIT_OK


def _mark_failed(out: Path, status: str):
    p = out / "manifest.json"
    if p.exists():
        man = RunManifest.from_json(p.read_text())
        man.status = f"failed: {status}"
        man.write(out)


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()

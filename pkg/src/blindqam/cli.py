"""Command-line harness: simulate, estimate, evaluate, sweep.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numeric failure.
"""

import argparse
import csv
import math
import os
import statistics
import sys

import numpy as np

from . import dataio
from .channel import ChannelParams, SampleBatch, draw_symbols, sigma2_for_snr_db, transmit
from .constellation import build_square_qam, entropy, inner_square_indices, mb_distribution
from .estimation import EmConfig, NumericDegeneracyError, da_fit, multi_init_em
from .metrics import evaluate
from .shaping import PRESETS

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DEFAULT_KS = "4,16,36,64"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindqam",
        description="Blind decoding-metric parameter estimation for shaped QAM",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate shaped QAM observations")
    p_sim.add_argument("--m", type=int, default=6, help="bits per symbol (even)")
    p_sim.add_argument("--mode", help=f"shaping preset ({', '.join(PRESETS)})")
    p_sim.add_argument("--nu", type=float, help="shaping exponent (alternative to --mode)")
    p_sim.add_argument("--delta", type=float, default=1.0, help="channel gain")
    p_sim.add_argument("--sigma2", type=float, help="total complex noise variance")
    p_sim.add_argument("--snr-db", type=float, help="SNR in dB (alternative to --sigma2)")
    p_sim.add_argument("--n", type=int, default=20000, help="number of symbols")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="observation file (.bin or .csv)")
    p_sim.add_argument("--symbols", help="symbol file (default: <out stem>_symbols<ext>)")
    p_sim.add_argument("--format", choices=("bin", "csv"), help="override extension dispatch")
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="fit channel parameters from observations")
    p_est.add_argument("--input", required=True, help="observation file")
    p_est.add_argument("--symbols", help="symbol file (required for --method da)")
    p_est.add_argument("--method", choices=("em", "da"), default="em")
    p_est.add_argument("--m", type=int, help="bits per symbol if no sidecar is present")
    p_est.add_argument("--ks", default=DEFAULT_KS, help="comma list of K-Means cluster counts")
    p_est.add_argument("--dist", choices=("general_pmf", "maxwell_boltzmann"),
                       default="general_pmf", help="EM distribution model")
    p_est.add_argument("--em-max-iters", type=int, default=100)
    p_est.add_argument("--em-tol", type=float, default=1e-8)
    p_est.add_argument("--format", choices=("bin", "csv"))
    p_est.add_argument("--out", required=True, help="report JSON path")
    p_est.set_defaults(func=cmd_estimate)

    p_eval = sub.add_parser("evaluate", help="score a parameter set on labeled data")
    p_eval.add_argument("--input", required=True, help="observation file")
    p_eval.add_argument("--symbols", required=True, help="symbol file")
    p_eval.add_argument("--params", required=True, help="sidecar or estimate report JSON")
    p_eval.add_argument("--format", choices=("bin", "csv"))
    p_eval.add_argument("--out", required=True, help="report JSON path")
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="DA-vs-EM rate sweep over modes and SNR")
    p_sweep.add_argument("--mode", default="mode1,mode2,mode3,mode4",
                         help="comma list of shaping presets")
    p_sweep.add_argument("--snr-db", required=True,
                         help="comma list of SNR points (strictly increasing)")
    p_sweep.add_argument("--seeds", type=int, default=5, help="seeds per cell")
    p_sweep.add_argument("--n", type=int, default=20000)
    p_sweep.add_argument("--seed", type=int, default=0, help="base seed")
    p_sweep.add_argument("--ks", default=DEFAULT_KS)
    p_sweep.add_argument("--em-max-iters", type=int, default=100)
    p_sweep.add_argument("--em-tol", type=float, default=1e-8)
    p_sweep.add_argument("--out", required=True, help="per-run CSV path")
    p_sweep.set_defaults(func=cmd_sweep)

    return parser


def _simulation_seeds(seed: int) -> tuple[int, int]:
    """Derive independent symbol/noise seeds from one user-facing seed."""
    state = np.random.SeedSequence(seed).generate_state(2)
    return int(state[0]), int(state[1])


def _resolve_distribution(c, mode: str | None, nu: float | None):
    if mode is not None and nu is not None:
        raise ValueError("give either --mode or --nu, not both")
    if mode is not None:
        if mode not in PRESETS:
            raise ValueError(f"unknown shaping mode {mode!r}; choose from {', '.join(PRESETS)}")
        return PRESETS[mode].distribution(c)
    return mb_distribution(c, nu if nu is not None else 0.0)


def cmd_simulate(args) -> int:
    c = build_square_qam(args.m)
    dist = _resolve_distribution(c, args.mode, args.nu)
    if (args.sigma2 is None) == (args.snr_db is None):
        raise ValueError("give exactly one of --sigma2 or --snr-db")
    if args.sigma2 is not None:
        sigma2 = args.sigma2
    else:
        sigma2 = sigma2_for_snr_db(args.delta, dist, c, args.snr_db)
    params = ChannelParams(delta=args.delta, sigma2=sigma2, dist=dist)
    if args.n < 1:
        raise ValueError("--n must be >= 1")

    sym_seed, noise_seed = _simulation_seeds(args.seed)
    x = draw_symbols(c, dist, args.n, sym_seed)
    batch = transmit(x, params, noise_seed)

    symbols_path = args.symbols
    if symbols_path is None:
        stem, ext = os.path.splitext(args.out)
        symbols_path = f"{stem}_symbols{ext}"
    dataio.write_samples(args.out, batch.observations, fmt=args.format)
    dataio.write_samples(symbols_path, batch.symbols, fmt=args.format)
    dataio.write_sidecar(dataio.sidecar_path(args.out), args.n, args.seed, c, params)
    print(
        f"simulate: wrote {args.n} samples to {args.out} "
        f"(delta={params.delta:.6g} sigma2={params.sigma2:.6g} "
        f"entropy={entropy(dist):.4f} bits, seed={args.seed})"
    )
    return EXIT_OK


def _load_batch(args, need_symbols: bool) -> tuple[SampleBatch, int]:
    observations = dataio.read_samples(args.input, fmt=args.format)
    symbols = None
    if getattr(args, "symbols", None):
        symbols = dataio.read_samples(args.symbols, fmt=args.format)
    elif need_symbols:
        raise ValueError("data-aided estimation requires transmitted symbols (--symbols)")
    sidecar = dataio.sidecar_path(args.input)
    m = None
    if os.path.exists(sidecar):
        m = dataio.params_doc_m(dataio.read_json(sidecar))
    if getattr(args, "m", None):
        if m is not None and m != args.m:
            raise ValueError(f"--m {args.m} conflicts with sidecar order m={m}")
        m = args.m
    if m is None:
        raise ValueError("constellation order unknown: no sidecar found, pass --m")
    return SampleBatch(observations=observations, symbols=symbols), m


def cmd_estimate(args) -> int:
    need_symbols = args.method == "da"
    batch, m = _load_batch(args, need_symbols)
    c = build_square_qam(m)

    if args.method == "da":
        params = da_fit(batch, c)
        dataio.write_estimate_report(args.out, "da", c, params=params)
        print(
            f"estimate[da]: delta={params.delta:.9g} sigma2={params.sigma2:.9g} "
            f"entropy={entropy(params.dist):.4f} bits"
        )
        return EXIT_OK

    ks = _parse_int_list(args.ks, "--ks")
    config = EmConfig(
        max_iters=args.em_max_iters,
        ll_rel_tol=args.em_tol,
        distribution_mode=args.dist,
    )
    # Branch selection by measured uncertainty needs the transmitted bits;
    # without them fall back to the EM objective itself.
    selection = "u_s" if batch.symbols is not None else "log_likelihood"
    result, chosen_k = multi_init_em(batch, c, ks, config, select_by=selection)
    dataio.write_estimate_report(args.out, "em", c, result=result, selection=selection)
    params = result.params
    print(
        f"estimate[em]: delta={params.delta:.6g} sigma2={params.sigma2:.6g} "
        f"entropy={entropy(params.dist):.4f} bits iterations={result.iterations_used} "
        f"chosen_k={chosen_k} converged={result.converged}"
    )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    batch, m = _load_batch(args, need_symbols=True)
    doc = dataio.read_json(args.params)
    params_m = dataio.params_doc_m(doc)
    if params_m != m:
        raise ValueError(
            f"constellation mismatch: parameters are for m={params_m}, data is m={m}"
        )
    c = build_square_qam(m)
    params = dataio.params_from_dict(doc, c)
    report = evaluate(batch, c, params)
    dataio.write_metric_report(args.out, report)
    print(
        f"evaluate: u_s={report.u_s:.6f} bits r_abc={report.r_abc:.6f} "
        f"r_a={report.r_a:.6f} bits/channel use (s_opt={report.s_opt:.4f})"
    )
    return EXIT_OK


SWEEP_FIELDS = [
    "mode", "snr_db", "seed", "r_a_da", "r_a_em", "r_abc_da", "r_abc_em",
    "em_iters", "chosen_k", "error",
]


def _sweep_cell(mode_name: str, snr: float, seed: int, n: int, c, ks, config) -> dict:
    dist = PRESETS[mode_name].distribution(c)
    sigma2 = sigma2_for_snr_db(1.0, dist, c, snr)
    params = ChannelParams(delta=1.0, sigma2=sigma2, dist=dist)
    sym_seed, noise_seed = _simulation_seeds(seed)
    x = draw_symbols(c, dist, n, sym_seed)
    batch = transmit(x, params, noise_seed)

    da_params = da_fit(batch, c)
    em_result, chosen_k = multi_init_em(batch, c, ks, config, select_by="u_s")
    report_da = evaluate(batch, c, da_params)
    report_em = evaluate(batch, c, em_result.params)
    return {
        "mode": mode_name,
        "snr_db": snr,
        "seed": seed,
        "r_a_da": report_da.r_a,
        "r_a_em": report_em.r_a,
        "r_abc_da": report_da.r_abc,
        "r_abc_em": report_em.r_abc,
        "em_iters": em_result.iterations_used,
        "chosen_k": chosen_k,
        "error": "",
    }


def cmd_sweep(args) -> int:
    modes = [m.strip() for m in args.mode.split(",") if m.strip()]
    for mode_name in modes:
        if mode_name not in PRESETS:
            raise ValueError(f"unknown shaping mode {mode_name!r}")
    snrs = [float(v) for v in args.snr_db.split(",") if v.strip()]
    if not snrs or any(b <= a for a, b in zip(snrs, snrs[1:])):
        raise ValueError("--snr-db must be a nonempty, strictly increasing list")
    if args.seeds < 1:
        raise ValueError("--seeds must be >= 1")
    ks = _parse_int_list(args.ks, "--ks")
    config = EmConfig(max_iters=args.em_max_iters, ll_rel_tol=args.em_tol)
    c = build_square_qam(6)

    rows = []
    for mode_name in modes:
        for snr in snrs:
            for rep in range(args.seeds):
                seed = args.seed + rep
                try:
                    row = _sweep_cell(mode_name, snr, seed, args.n, c, ks, config)
                except Exception as exc:
                    row = {field: "" for field in SWEEP_FIELDS}
                    row.update(mode=mode_name, snr_db=snr, seed=seed, error=str(exc))
                rows.append(row)
                status = row["error"] or (
                    f"r_a_em={row['r_a_em']:.4f} r_a_da={row['r_a_da']:.4f}"
                )
                print(f"sweep: mode={mode_name} snr_db={snr:g} seed={seed} {status}")

    rows.sort(key=lambda r: (r["mode"], r["snr_db"], r["seed"]))
    with open(args.out, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row[k]) for k in SWEEP_FIELDS})

    good = [r for r in rows if not r["error"]]
    aggregate = _aggregate(good)
    stem = os.path.splitext(args.out)[0]
    agg_path = f"{stem}_agg.csv"
    agg_fields = ["mode", "snr_db", "n_seeds", "r_a_da", "r_a_em", "r_abc_da",
                  "r_abc_em", "em_iters_median"]
    with open(agg_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=agg_fields)
        writer.writeheader()
        for row in aggregate:
            writer.writerow({k: _fmt_cell(row[k]) for k in agg_fields})

    if aggregate:
        from .plotting import save_sweep_figures

        figures = save_sweep_figures(aggregate, stem)
        print(f"sweep: wrote {args.out}, {agg_path}, " + ", ".join(figures))
    if not good:
        print("sweep: all cells failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _aggregate(rows: list[dict]) -> list[dict]:
    cells: dict[tuple, list[dict]] = {}
    for row in rows:
        cells.setdefault((row["mode"], row["snr_db"]), []).append(row)
    out = []
    for (mode_name, snr), group in sorted(cells.items()):
        out.append({
            "mode": mode_name,
            "snr_db": snr,
            "n_seeds": len(group),
            "r_a_da": statistics.fmean(r["r_a_da"] for r in group),
            "r_a_em": statistics.fmean(r["r_a_em"] for r in group),
            "r_abc_da": statistics.fmean(r["r_abc_da"] for r in group),
            "r_abc_em": statistics.fmean(r["r_abc_em"] for r in group),
            "em_iters_median": statistics.median(r["em_iters"] for r in group),
        })
    return out


def _fmt_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"{flag} must be a comma list of integers: {exc}") from None
    if not values:
        raise ValueError(f"{flag} must be nonempty")
    return values


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericDegeneracyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: ``meitest {test,rivw,simulate,summarize}``.

Exit codes: 0 success, 1 internal error, 2 input/config error,
3 statistical degeneracy (too few instruments, non-positive denominators).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import secrets
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .egger import conventional_select, egger_fit
from .errors import ConfigError, InputError, MeiError, StatisticalError
from .gwas_io import CodingScheme, PairTable, harmonize, orient, parse_summary_table
from .mei import analyze
from .rivw import SELECTED_TSV_HEADER, SelectionConfig, fit_rivw, selected_rows
from .simulate import default_workers, parse_grid, report_rows, run_experiment
from .stats_dist import RngStream, lambda_from_pvalue

log = logging.getLogger("meitest")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_STAT = 0, 1, 2, 3
METHOD_CHOICES = ("ei", "mei-major", "mei-normal", "mei-combined", "all")
BUILTIN_GRIDS = ("table1", "figure2", "figure3", "figure4")


# ---------------------------------------------------------------------------
# helpers


def _clean(obj):
    """Make ``obj`` strict-JSON serialisable (non-finite floats become null)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def write_tsv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if math.isfinite(v) else "NA"
    return v


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Path, command: str, config: dict, seed, inputs) -> None:
    outputs = {p.name: sha256_file(p) for p in sorted(outdir.iterdir())
               if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "tool": "meitest",
        "version": __version__,
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": outputs,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    write_json(outdir / "manifest.json", manifest)


def error_payload(exc: BaseException, code: int) -> dict:
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": code}


def parse_column_map(text: str | None) -> dict | None:
    if not text:
        return None
    out = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"column mapping entries look like role=name, got {item!r}")
        role, name = item.split("=", 1)
        out[role.strip()] = name.strip()
    return out


def _delimiter(arg: str):
    return {"auto": "auto", "tab": "\t", "comma": ",", "whitespace": None}[arg]


def load_pairs(args) -> tuple[PairTable, dict]:
    delim = _delimiter(args.delimiter)
    exp = parse_summary_table(args.exposure, parse_column_map(args.exposure_columns), delim)
    out = parse_summary_table(args.outcome, parse_column_map(args.outcome_columns), delim)
    pairs, report = harmonize(exp, out, args.palindromic_margin)
    return PairTable.from_pairs(pairs), report.to_dict()


def resolve_seed(seed):
    return secrets.randbits(64) if seed is None else int(seed)


def _lam(args, which: str) -> float:
    raw = getattr(args, f"{which}_lambda")
    if raw is not None:
        if not raw > 0:
            raise ConfigError(f"--{which}-lambda must be positive")
        return float(raw)
    try:
        return lambda_from_pvalue(getattr(args, f"{which}_pvalue"))
    except ValueError as exc:
        raise ConfigError(f"--{which}-pvalue: {exc}") from None


def _selection(lam: float, eta: float) -> SelectionConfig:
    try:
        return SelectionConfig(lam, eta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_test(args) -> int:
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = resolve_seed(args.seed)
    methods = {"ei", "mei-major", "mei-normal", "mei-combined"} if args.method == "all" else {args.method}
    pairs, harm = load_pairs(args)
    pairs.write_tsv(outdir / "harmonized.tsv")
    write_json(outdir / "harmonization.json", harm)

    results: dict = {"harmonization": {k: harm[k] for k in ("n_shared", "kept", "flipped", "dropped")}}
    failures = []
    config = {"method": args.method, "eta": args.eta, "seed": seed,
              "palindromic_margin": args.palindromic_margin}

    if "ei" in methods:
        lam = _lam(args, "ei")
        config["ei_lambda"] = lam
        sel = orient(conventional_select(pairs, lam), CodingScheme.NORMAL_ALLELE)
        entry = {"lambda": lam, "n_selected": len(sel),
                 "mean_gamma_hat": float(np.mean(sel.gamma_hat)) if len(sel) else None}
        try:
            fit = egger_fit(sel)
            entry.update(fit.to_dict())
            entry["z"], entry["p"] = entry.pop("z_e"), entry.pop("p_value")
            write_tsv(outdir / "egger_residuals.tsv", ("snp_id", "gamma_hat", "Gamma_hat", "sigma_y", "residual"),
                      zip(map(str, sel.ids()), sel.gamma_hat, sel.Gamma_hat, sel.sigma_y, fit.residuals))
        except StatisticalError as exc:
            entry["error"] = error_payload(exc, EXIT_STAT)
            failures.append(exc)
        results["ei"] = entry

    mei_methods = methods - {"ei"}
    if mei_methods:
        lam = _lam(args, "mei")
        config["mei_lambda"] = lam
        cfg = _selection(lam, args.eta)
        schemes = []
        if mei_methods & {"mei-major", "mei-combined"}:
            schemes.append(CodingScheme.MAJOR_ALLELE)
        if mei_methods & {"mei-normal", "mei-combined"}:
            schemes.append(CodingScheme.NORMAL_ALLELE)
        res = analyze(pairs, cfg, RngStream(seed, 0), schemes=tuple(schemes))
        idx = res.selection.index
        results["selection"] = {"lambda": lam, "eta": args.eta, "n_selected": len(idx)}
        for scheme, key in ((CodingScheme.MAJOR_ALLELE, "mei-major"), (CodingScheme.NORMAL_ALLELE, "mei-normal")):
            if scheme not in schemes:
                continue
            flips = res.flips.get(scheme)
            entry = {"n_selected": len(idx)}
            if flips is not None:
                g = np.where(flips, -pairs.gamma_hat[idx], pairs.gamma_hat[idx])
                entry["mean_gamma_hat"] = float(np.mean(g)) if len(g) else None
            if scheme in res.mei:
                entry.update(res.mei[scheme].to_dict())
                entry["rivw"] = res.rivw[scheme].to_dict()
            else:
                entry["error"] = error_payload(res.errors[scheme], EXIT_STAT)
                if key in mei_methods:
                    failures.append(res.errors[scheme])
            if key in mei_methods or "mei-combined" in mei_methods:
                results[key.replace("-", "_")] = entry
        if "mei-combined" in mei_methods:
            if res.combined is not None:
                results["mei_combined"] = res.combined.to_dict()
            else:
                exc = res.errors.get("combined") or next(iter(res.errors.values()))
                results["mei_combined"] = {"error": error_payload(exc, EXIT_STAT)}
                failures.append(exc)
        _write_mei_snps(outdir / "mei_selected.tsv", pairs, res)

    write_json(outdir / "results.json", results)
    code = EXIT_OK
    if failures:
        code = EXIT_STAT
        write_json(outdir / "error.json", error_payload(failures[0], EXIT_STAT))
    write_manifest(outdir, "test", config, seed, [args.exposure, args.outcome])
    return code


def _write_mei_snps(path: Path, pairs: PairTable, res) -> None:
    idx = res.selection.index
    ids = pairs.ids()[idx]
    cols = {"snp_id": [str(i) for i in ids], "gamma_hat": pairs.gamma_hat[idx], "Gamma_hat": pairs.Gamma_hat[idx],
            "sigma_x": pairs.sigma_x[idx], "sigma_y": pairs.sigma_y[idx], "z_noise": res.selection.z_noise[idx]}
    for scheme, tag in ((CodingScheme.MAJOR_ALLELE, "major"), (CodingScheme.NORMAL_ALLELE, "normal")):
        if scheme in res.rb:
            cols[f"flipped_{tag}"] = [int(f) for f in res.flips[scheme]]
            cols[f"gamma_rb_{tag}"] = res.rb[scheme].gamma_rb
            cols[f"sigma2_rb_{tag}"] = res.rb[scheme].sigma2_rb
        if scheme in res.mei:
            cols[f"u_{tag}"] = res.mei[scheme].u_hat
    header = list(cols)
    write_tsv(path, header, zip(*(cols[h] for h in header)))


def cmd_rivw(args) -> int:
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = resolve_seed(args.seed)
    pairs, harm = load_pairs(args)
    write_json(outdir / "harmonization.json", harm)
    lam = _lam(args, "mei")
    config = {"mei_lambda": lam, "eta": args.eta, "seed": seed, "palindromic_margin": args.palindromic_margin}
    code = EXIT_OK
    try:
        result, sel, rb = fit_rivw(pairs, _selection(lam, args.eta), RngStream(seed, 0))
        write_json(outdir / "rivw.json", result.to_dict())
        write_tsv(outdir / "selected.tsv", SELECTED_TSV_HEADER, selected_rows(pairs, sel, rb))
    except StatisticalError as exc:
        code = EXIT_STAT
        write_json(outdir / "error.json", error_payload(exc, EXIT_STAT))
    write_manifest(outdir, "rivw", config, seed, [args.exposure, args.outcome])
    return code


def _grid_text(config: str) -> str:
    if config in BUILTIN_GRIDS:
        return resources.files("meitest.grids").joinpath(f"{config}.ini").read_text(encoding="utf-8")
    try:
        return Path(config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read grid file: {exc}") from None


def cmd_simulate(args) -> int:
    grid = parse_grid(_grid_text(args.config))
    if args.replicates is not None:
        grid = [_replace_reps(c, args.replicates) for c in grid]
    elif args.full:
        grid = [_replace_reps(c, 10_000) for c in grid]
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = resolve_seed(args.seed)
    workers = default_workers() if args.threads is None else args.threads
    reports = run_experiment(grid, seed, workers)
    rows = report_rows(reports)
    header = list(rows[0]) if rows else []
    write_tsv(outdir / "report.tsv", header, ([r[h] for h in header] for r in rows))
    write_json(outdir / "report.json", {"seed": seed, "scenarios": [r.to_dict() for r in reports]})
    for rep in reports:
        for w in rep.warnings:
            log.warning("%s: %s", rep.scenario, w)
    config = {"grid": [c.to_dict() for c in grid]}
    inputs = [] if args.config in BUILTIN_GRIDS else [args.config]
    write_manifest(outdir, "simulate", config, seed, inputs)
    return EXIT_OK


def _replace_reps(cfg, n):
    import dataclasses
    return dataclasses.replace(cfg, replicates=n)


def cmd_summarize(args) -> int:
    if not args.denominator >= 1:
        raise ConfigError("--denominator must be at least 1")
    bonf = args.alpha / args.denominator
    entries = []
    for path in args.results:
        try:
            entries.append(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError) as exc:
            raise InputError(f"cannot read results file {path}: {exc}") from None
    if args.restrict_rivw != "none":
        cut = args.alpha if args.restrict_rivw == "nominal" else bonf
        entries = [e for e in entries
                   if (e.get("mei_major") or {}).get("rivw", {}).get("p_value", 1.0) is not None
                   and (e.get("mei_major") or {}).get("rivw", {}).get("p_value", 1.0) < cut]
    summary = {"n_pairs": len(entries), "alpha": args.alpha, "bonferroni_threshold": bonf, "methods": {}}
    for method in ("mei_combined", "mei_major", "mei_normal", "ei"):
        ps, n_iv, mu_g = [], [], []
        for e in entries:
            m = e.get(method)
            if not m or m.get("p") is None:
                continue
            ps.append(m["p"])
            src = e.get("mei_major", {}) if method == "mei_combined" else m
            if src.get("n_selected") is not None:
                n_iv.append(src["n_selected"])
            if m.get("mean_gamma_hat") is not None:
                mu_g.append(m["mean_gamma_hat"])
        n = len(entries)
        nom = sum(p < args.alpha for p in ps)
        bon = sum(p < bonf for p in ps)
        summary["methods"][method] = {
            "n_tested": len(ps),
            "n_nominal": nom, "frac_nominal": nom / n if n else None,
            "n_bonferroni": bon, "frac_bonferroni": bon / n if n else None,
            "mean_n_ivs": float(np.mean(n_iv)) if n_iv else None,
            "mean_gamma_hat": float(np.mean(mu_g)) if mu_g else None,
        }
    text = json.dumps(_clean(summary), indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--exposure", required=True, help="exposure GWAS summary statistics")
    p.add_argument("--outcome", required=True, help="outcome GWAS summary statistics")
    p.add_argument("--exposure-columns", help="role=name list, e.g. snp=rsid,beta=b")
    p.add_argument("--outcome-columns", help="role=name list for the outcome table")
    p.add_argument("--delimiter", choices=("auto", "tab", "comma", "whitespace"), default="auto")
    p.add_argument("--palindromic-margin", type=float, default=0.08,
                   help="drop A/T and C/G SNPs with exposure eaf within this margin of 0.5")
    p.add_argument("--eta", type=float, default=0.5, help="rerandomization noise scale")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (drawn and recorded if omitted)")
    p.add_argument("--mei-pvalue", type=float, default=5e-5, help="selection p-value for RIVW/MEI")
    p.add_argument("--mei-lambda", type=float, default=None, help="raw cutoff overriding --mei-pvalue")
    p.add_argument("--output", "-o", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meitest", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="pleiotropy tests on a pair of GWAS tables")
    _add_data_args(p)
    p.add_argument("--method", choices=METHOD_CHOICES, default="all")
    p.add_argument("--ei-pvalue", type=float, default=5e-8, help="selection p-value for the Egger test")
    p.add_argument("--ei-lambda", type=float, default=None, help="raw cutoff overriding --ei-pvalue")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("rivw", help="RIVW causal effect estimate")
    _add_data_args(p)
    p.set_defaults(func=cmd_rivw)

    p = sub.add_parser("simulate", help="run a simulation grid")
    p.add_argument("--config", required=True, help=f"INI grid file or one of {', '.join(BUILTIN_GRIDS)}")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker processes (default $MEITEST_THREADS or 1)")
    p.add_argument("--replicates", type=int, default=None, help="override replicates for every scenario")
    p.add_argument("--full", action="store_true", help="10,000 replicates per scenario")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="count significant pairs across results.json files")
    p.add_argument("results", nargs="+")
    p.add_argument("--denominator", type=int, required=True, help="Bonferroni correction denominator")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--restrict-rivw", choices=("none", "nominal", "bonferroni"), default="none",
                   help="keep only pairs whose RIVW estimate is significant")
    p.add_argument("--output", "-o", default=None)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    outdir = getattr(args, "output", None) if args.command != "summarize" else None
    try:
        return args.func(args)
    except (InputError, ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail(exc, EXIT_INPUT, outdir)
    except StatisticalError as exc:
        return _fail(exc, EXIT_STAT, outdir)
    except MeiError as exc:
        return _fail(exc, EXIT_INTERNAL, outdir)
    except Exception as exc:  # noqa: BLE001 - last-resort exit code 1
        log.exception("internal error")
        return _fail(exc, EXIT_INTERNAL, outdir)


def _fail(exc, code, outdir) -> int:
    payload = error_payload(exc, code)
    print(json.dumps(payload), file=sys.stderr)
    if outdir:
        try:
            Path(outdir).mkdir(parents=True, exist_ok=True)
            write_json(Path(outdir) / "error.json", payload)
        except OSError:
            pass
    return code


if __name__ == "__main__":
    sys.exit(main())

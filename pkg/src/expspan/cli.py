"""Batch front door: validate a JSON config and run pipeline stages to CSV/JSON outputs.

Usage::

    expspan validate --config run.json
    expspan run --config run.json [--precision-override BITS] [--out DIR]

Exit codes: 0 success, 1 invalid config / usage, 2 a stage assertion failed,
3 precision exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import gmpy2

from .biorth import compute_biorthogonal, fit_distance_bound, fit_norm_bound
from .errors import ConfigError, ExpSpanError, PrecisionExhaustedError
from .expand import analyze, builtin_function
from .hereditary import sweep_partitions, write_partitions_csv
from .numerics import (
    PrecisionConfig,
    complex_to_decimal,
    factor_residual,
    roundoff_scale,
    symmetric_eigenvalues,
    to_decimal,
    working_precision,
)
from .spaces import Interval, build_space, geometric_family, squares_family, validate_exponents
from .synthesis import DiagonalOperator, make_weights, operator_report, tail_norm

log = logging.getLogger("expspan")

STAGES = ("gram", "biorth", "bound-fit", "expand", "hereditary", "operator")
_KEYS = {
    "exponents", "interval", "precision", "delta", "weights", "partitions",
    "commands", "output_dir", "functions", "seed",
}
_REQUIRED = {"exponents", "interval", "commands"}

EXIT_OK, EXIT_CONFIG, EXIT_ASSERTION, EXIT_PRECISION = 0, 1, 2, 3


@dataclass(frozen=True)
class RunConfig:
    exponents: object  # list of decimal strings, or {"kind": "n^2"|"geometric", "N": int, "params": {...}}
    interval: dict
    commands: tuple
    precision: int = 512
    delta: str = "0.5"
    weights: object = "shift"
    partitions: object = "exhaustive"
    output_dir: str = "expspan_out"
    functions: tuple = ("t^1",)
    seed: int = 0

    def echo(self) -> dict:
        d = asdict(self)
        d["commands"] = list(self.commands)
        d["functions"] = list(self.functions)
        return d

    def exponent_sequence(self):
        desc = self.exponents
        if isinstance(desc, dict):
            if desc["kind"] == "n^2":
                return squares_family(desc["N"])
            p = desc.get("params", {})
            return geometric_family(p["q"], p["r"], desc["N"])
        return validate_exponents(desc)


def _is_decimal(v) -> bool:
    if isinstance(v, bool):
        return False
    if isinstance(v, int):
        return True
    if not isinstance(v, str):
        return False
    try:
        Fraction(v.strip())
    except (ValueError, ZeroDivisionError):
        return False
    return "/" not in v


def parse_config(raw) -> RunConfig:
    """Validate a decoded JSON object, collecting every violation before failing."""
    errs = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    for k in sorted(set(raw) - _KEYS):
        errs.append(f"unknown key {k!r}")
    for k in sorted(_REQUIRED - set(raw)):
        errs.append(f"missing required key {k!r}")

    exps = raw.get("exponents")
    if exps is not None:
        if isinstance(exps, list):
            bad = [v for v in exps if not _is_decimal(v)]
            if not exps:
                errs.append("exponents: empty list")
            if bad:
                errs.append(f"exponents: non-decimal entries {bad!r}")
            if not bad and exps:
                try:
                    validate_exponents(exps)
                except ExpSpanError as e:
                    errs.append(f"exponents: {e}")
        elif isinstance(exps, dict):
            for k in sorted(set(exps) - {"kind", "N", "params"}):
                errs.append(f"exponents: unknown key {k!r}")
            kind = exps.get("kind")
            if kind not in ("n^2", "geometric"):
                errs.append(f"exponents.kind must be 'n^2' or 'geometric', got {kind!r}")
            n = exps.get("N")
            if not isinstance(n, int) or isinstance(n, bool) or n < 1:
                errs.append(f"exponents.N must be a positive integer, got {n!r}")
            if kind == "geometric":
                params = exps.get("params") or {}
                for k in ("q", "r"):
                    if not _is_decimal(params.get(k)):
                        errs.append(f"exponents.params.{k} must be a decimal string")
                if all(_is_decimal(params.get(k)) for k in ("q", "r")):
                    if not (Fraction(params["q"]) > 0 and Fraction(params["r"]) > 1):
                        errs.append("exponents.params needs q > 0 and r > 1")
        else:
            errs.append("exponents must be a list of decimal strings or a family descriptor")

    itv = raw.get("interval")
    if itv is not None:
        if not isinstance(itv, dict) or set(itv) != {"a", "b"}:
            errs.append("interval must be an object with exactly the keys 'a' and 'b'")
        elif not (_is_decimal(itv["a"]) and _is_decimal(itv["b"])):
            errs.append("interval: a and b must be decimal strings")
        elif not Fraction(str(itv["a"])) < Fraction(str(itv["b"])):
            errs.append(f"interval: requires a < b, got a={itv['a']}, b={itv['b']}")

    prec = raw.get("precision", 512)
    if not isinstance(prec, int) or isinstance(prec, bool) or prec < 128:
        errs.append(f"precision must be an integer >= 128, got {prec!r}")

    delta = raw.get("delta", "0.5")
    if not _is_decimal(delta):
        errs.append(f"delta must be a decimal string, got {delta!r}")
    elif Fraction(str(delta)) <= 0:
        errs.append("delta must be positive")

    weights = raw.get("weights", "shift")
    if weights != "shift":
        if not isinstance(weights, list):
            errs.append("weights must be 'shift' or a list")
        else:
            for w in weights:
                ok = _is_decimal(w) or (isinstance(w, list) and len(w) == 2 and all(_is_decimal(x) for x in w))
                if not ok:
                    errs.append(f"weights: entry {w!r} is neither a decimal string nor a [re, im] pair")

    parts = raw.get("partitions", "exhaustive")
    if parts != "exhaustive":
        if not isinstance(parts, dict) or set(parts) != {"sample", "seed"}:
            errs.append("partitions must be 'exhaustive' or {'sample': count, 'seed': int}")
        elif not all(isinstance(parts[k], int) and not isinstance(parts[k], bool) for k in ("sample", "seed")):
            errs.append("partitions.sample and partitions.seed must be integers")

    cmds = raw.get("commands")
    if cmds is not None:
        if not isinstance(cmds, list) or not cmds:
            errs.append("commands must be a non-empty list")
        else:
            for c in cmds:
                if c not in STAGES:
                    errs.append(f"commands: unknown stage {c!r} (known: {', '.join(STAGES)})")

    funcs = raw.get("functions", ["t^1"])
    if not isinstance(funcs, list):
        errs.append("functions must be a list of built-in names")
    else:
        for fn in funcs:
            try:
                builtin_function(fn)
            except (ExpSpanError, AttributeError):
                errs.append(f"functions: unknown built-in {fn!r}")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        errs.append("seed must be an integer")
    out = raw.get("output_dir", "expspan_out")
    if not isinstance(out, str):
        errs.append("output_dir must be a string path")

    if errs:
        raise ConfigError(errs)
    return RunConfig(
        exponents=exps,
        interval={"a": str(itv["a"]), "b": str(itv["b"])},
        commands=tuple(cmds),
        precision=prec,
        delta=str(delta),
        weights=weights,
        partitions=parts,
        output_dir=out,
        functions=tuple(funcs),
        seed=seed,
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError([f"config is not valid JSON: {e}"]) from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


@dataclass
class _Run:
    cfg: RunConfig
    bits: int
    out: Path
    products: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)
    escalations: list = field(default_factory=list)

    def check(self, stage, name, passed, detail=""):
        self.assertions.append({"stage": stage, "name": name, "passed": bool(passed), "detail": detail})
        if not passed:
            log.warning("assertion failed: %s/%s %s", stage, name, detail)

    # lazily built products shared by stages
    def space(self):
        if "space" not in self.products:
            iv = Interval(self.cfg.interval["a"], self.cfg.interval["b"])
            sp = build_space(self.cfg.exponent_sequence(), iv, PrecisionConfig(self.bits, max(4096, self.bits)))
            if sp.escalations:
                self.escalations.extend({"stage": "gram", "failed_bits": b} for b in sp.escalations)
            self.products["space"] = sp
        return self.products["space"]

    def bio(self):
        if "bio" not in self.products:
            self.products["bio"] = compute_biorthogonal(self.space())
        return self.products["bio"]

    def operator(self):
        if "op" not in self.products:
            sp = self.space()
            w = self.cfg.weights
            if w == "shift":
                weights = make_weights(self.cfg.delta, sp.exponents, bits=sp.bits)
            else:
                with working_precision(sp.bits):
                    vals = [gmpy2.mpc(gmpy2.mpfr(x[0]), gmpy2.mpfr(x[1])) if isinstance(x, list) else str(x) for x in w]
                weights = make_weights(self.cfg.delta, sp.exponents, "custom", vals, bits=sp.bits)
            self.products["op"] = DiagonalOperator(sp, self.bio(), weights)
        return self.products["op"]


def _stage_gram(run: _Run):
    sp = run.space()
    with working_precision(sp.bits):
        resid = factor_residual(sp.gram, sp.gram_factor)
        bound = roundoff_scale(sp.dim, sp.bits) * sp.gram.max_abs()
        ev = symmetric_eigenvalues(sp.normalized_gram())
    run.check("gram", "factor_reconstruction", resid <= bound, f"{to_decimal(resid, 6)} <= {to_decimal(bound, 6)}")
    ex = sp.exponents
    return {
        "dimension": sp.dim,
        "precision_bits": sp.bits,
        "gap": str(ex.gap) if ex.gap is not None else None,
        "muntz_partial_sum": to_decimal(gmpy2.mpfr(ex.muntz_partial_sum.numerator) / ex.muntz_partial_sum.denominator),
        "max_abs_gram": to_decimal(sp.gram.max_abs()),
        "normalized_gram_min_eigenvalue": to_decimal(ev[0]),
        "normalized_gram_max_eigenvalue": to_decimal(ev[-1]),
        "factor_residual": to_decimal(resid),
    }


def _stage_biorth(run: _Run):
    bio = run.bio()
    sp = bio.space
    with working_precision(bio.bits):
        bound = bio.residual_bound()
        product_err = max(abs(r * d - 1) for r, d in zip(bio.r_norms, bio.distances))
    run.check("biorth", "biorthogonality", bio.residual <= bound, f"{to_decimal(bio.residual, 6)} <= {to_decimal(bound, 6)}")
    run.check("biorth", "norm_times_distance", product_err <= roundoff_scale(1, bio.bits), to_decimal(product_err, 6))
    with open(run.out / "distances.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "lambda", "D_n", "r_norm"])
        for n in range(1, bio.dim + 1):
            w.writerow([n, str(sp.exponents.exact[n - 1]), to_decimal(bio.distances[n - 1]), to_decimal(bio.r_norms[n - 1])])
    return {"residual": to_decimal(bio.residual), "residual_bound": to_decimal(bound), "rows": bio.dim}


def _stage_bound_fit(run: _Run):
    bio = run.bio()
    dist = fit_distance_bound(bio)
    mirror = fit_norm_bound(bio)
    with working_precision(bio.bits):
        for d, m in zip(dist, mirror):
            run.check("bound-fit", f"margins_nonnegative[eps={to_decimal(d.epsilon, 6)}]", min(d.per_n_margins) >= 0)
            run.check(
                "bound-fit",
                f"mirror_exact[eps={to_decimal(d.epsilon, 6)}]",
                m.slope == -d.slope and m.log_m_epsilon == -d.log_m_epsilon and m.per_n_margins == d.per_n_margins,
            )
    with open(run.out / "bounds.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "epsilon", "m_epsilon", "slope", "margins"])
        for fit in dist + mirror:
            w.writerow([
                fit.kind,
                to_decimal(fit.epsilon),
                to_decimal(fit.fitted_m_epsilon),
                to_decimal(fit.slope),
                ";".join(to_decimal(v) for v in fit.per_n_margins),
            ])
    return {"slope": to_decimal(dist[0].slope), "fits": len(dist) + len(mirror)}


def _stage_expand(run: _Run):
    sp, bio = run.space(), run.bio()
    out = {}
    for name in run.cfg.functions:
        res = analyze(builtin_function(name), sp, bio)
        out[name] = {
            "coeffs": [complex_to_decimal(c) for c in res.coeffs],
            "residual_norm": to_decimal(res.residual_norm),
        }
    return out


def _stage_hereditary(run: _Run):
    sp, bio = run.space(), run.bio()
    p = run.cfg.partitions
    if p == "exhaustive":
        res = sweep_partitions(sp, bio, "exhaustive")
    else:
        res = sweep_partitions(sp, bio, "sample", count=p["sample"], seed=p["seed"])
    run.check("hereditary", "all_complete", res.all_complete, f"{sum(r.complete for r in res.reports)}/{len(res.reports)}")
    write_partitions_csv(res, run.out / "partitions.csv")
    return {
        "partitions": len(res.reports),
        "min_sigma": to_decimal(res.min_sigma),
        "median_sigma": to_decimal(res.median_sigma),
        "argmin": res.argmin.bits(),
    }


def _stage_operator(run: _Run):
    op = run.operator()
    rep = operator_report(op, seed=run.cfg.seed)
    bits = op.bits
    with working_precision(bits):
        tol = gmpy2.mpfr(2) ** (-(bits // 2))
        run.check("operator", "adjoint_identity", gmpy2.mpfr(rep["adjoint_max_residual"]) < tol)
        run.check("operator", "t_star_eigen", max(gmpy2.mpfr(v) for v in rep["eigen"]["t_star_residuals"]) < tol)
        run.check("operator", "kernel_trivial_and_simple", rep["eigen"]["kernel_trivial"] and rep["eigen"]["simple"])
        if op.dim >= 2:
            run.check("operator", "not_normal", gmpy2.mpfr(rep["commutator_norm"]) > 0)
        tails = [tail_norm(op, m) for m in range(op.dim + 1)]
        run.check("operator", "tail_below_analytic_bound", all(t.computed <= t.analytic_bound for t in tails))
        rep["tail_norms_monotone"] = all(b.computed <= a.computed for a, b in zip(tails, tails[1:]))
    s = rep["synthesis"]
    run.check("operator", "spectral_synthesis", s["failed"] == 0 and s["undecided"] == 0, f"{s['passed']}/{s['samples']}")
    (run.out / "operator.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return {"synthesis": s, "commutator_norm": rep["commutator_norm"]}


_RUNNERS = {
    "gram": _stage_gram,
    "biorth": _stage_biorth,
    "bound-fit": _stage_bound_fit,
    "expand": _stage_expand,
    "hereditary": _stage_hereditary,
    "operator": _stage_operator,
}


def run(cfg: RunConfig, precision_override: int | None = None, out: str | Path | None = None) -> tuple[dict, int]:
    """Execute the configured stages in order; returns the report and the exit code."""
    bits = precision_override or cfg.precision
    out_dir = Path(out or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    r = _Run(cfg, bits, out_dir)
    code = EXIT_OK
    failure = None
    for stage in cfg.commands:
        t0 = time.perf_counter()
        try:
            r.stages[stage] = _RUNNERS[stage](r)
        except PrecisionExhaustedError as e:
            code, failure = EXIT_PRECISION, {"stage": stage, "error": type(e).__name__, "message": str(e)}
        except ExpSpanError as e:
            code, failure = EXIT_ASSERTION, {"stage": stage, "error": type(e).__name__, "message": str(e)}
        finally:
            r.wall_times[stage] = round(time.perf_counter() - t0, 6)
        if failure:
            r.check(stage, "stage_completed", False, failure["message"])
            break
    if code == EXIT_OK and not all(a["passed"] for a in r.assertions):
        code = EXIT_ASSERTION
    report = {
        "config": cfg.echo(),
        "precision_bits": bits,
        "stages": r.stages,
        "assertions": r.assertions,
        "escalations": r.escalations,
        "failed": code != EXIT_OK,
        "failure": failure,
        "exit_code": code,
        "wall_times": r.wall_times,
    }
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report, code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="expspan", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    p_run = sub.add_parser("run", help="run the configured pipeline stages")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--precision-override", type=int, default=None, metavar="BITS")
    p_run.add_argument("--out", default=None, metavar="DIR")
    p_val = sub.add_parser("validate", help="validate a config without computing")
    p_val.add_argument("--config", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(e, file=sys.stderr)
        return EXIT_CONFIG
    if args.cmd == "validate":
        print(f"config OK: {len(cfg.commands)} stage(s): {', '.join(cfg.commands)}")
        return EXIT_OK
    if args.precision_override is not None and args.precision_override < 128:
        print("--precision-override must be >= 128", file=sys.stderr)
        return EXIT_CONFIG
    report, code = run(cfg, args.precision_override, args.out)
    out = Path(args.out or cfg.output_dir)
    log.info("wrote %s (exit %d)", out / "report.json", code)
    return code


if __name__ == "__main__":
    raise SystemExit(main())

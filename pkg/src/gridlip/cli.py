"""Command-line front door.

One executable, one subcommand per capability: sample, bounds, transport,
match, stats, deviation, scaling, verify, plus report (a study run that also
writes figures and all artifacts into a directory).  Every subcommand is
deterministic given its flags and seed.

Conventions: rationals travel as "num/den" strings and are parsed exactly;
where exactness matters (c, radius) floats are rejected by construction
since everything goes through Fraction.  Output is JSON on stdout unless a
study is asked for CSV.  Errors print one machine-readable JSON line on
stderr and map to exit codes: 1 validation, 2 regime, 3 internal invariant
or unexpected failure.

`--config file.json` preloads any subcommand's flags (keys named like the
long flags, dashes or underscores); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import (
    GridlipError,
    InternalInvariantError,
    RegimeError,
    ValidationError,
)
from .experiments import ExperimentPlan, deviation_study, scaling_study
from .lattice import Configuration, GridSpec, cell_counts, sample_configuration
from .matching import (
    BijectionCertificate,
    HallViolation,
    build_instance,
    solve_matching,
    verify_certificate,
)
from .rational import fraction_str, parse_fraction
from .solver import bounds_report, feasible_level, level_for
from .stats import (
    TailBoundParams,
    bonnet_tail_bounds,
    entropy,
    entropy_derivative,
    gamma_exponent,
    hypergeom_pmf,
    hypergeom_pmf_log2,
    hypergeom_tail,
    hypergeom_tail_log2,
    pmf_upper_via_entropy,
    stirling_sandwich,
    stirling_sandwich_log2,
)
from .transport import (
    build_dyadic_transport,
    density_from_counts,
    plan_from_json_dict,
    plan_to_json_dict,
    transport_metrics,
    verify_mass_preservation,
)

__all__ = ["CliConfig", "run", "main"]


@dataclass(frozen=True)
class CliConfig:
    """Validated view of one invocation's flags."""

    subcommand: str
    points: str | None = None
    out: str | None = None
    seed: int | None = None
    d: int | None = None
    n: int | None = None
    c: Fraction | None = None
    l: int | None = None
    q: float | None = None
    alpha: float | None = None
    trials: int | None = None
    format: str = "json"

    def __post_init__(self) -> None:
        if self.format not in ("json", "csv"):
            raise ValidationError("format must be json or csv")
        if self.seed is not None and not 0 <= self.seed < 1 << 64:
            raise ValidationError("seed must fit in 64 bits")


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors."""

    def error(self, message):
        raise ValidationError(message)


def _fraction(text: str) -> Fraction:
    return parse_fraction(text)


def _int_list(value) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    return tuple(int(part) for part in str(value).split(",") if part)


def _fraction_list(value) -> tuple[Fraction, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(parse_fraction(str(v)) for v in value)
    return tuple(parse_fraction(part) for part in str(value).split(",") if part)


def _float_list(value) -> tuple[float, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(float(v) for v in value)
    return tuple(float(part) for part in str(value).split(",") if part)


def _read_json(path: str):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from None


def _emit(payload, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_text(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_configuration(args) -> Configuration:
    """From --points (file or '-'), else sampled from --d/--n/--c/--seed.

    When both are given the flags must agree with the file; the file wins
    for the data itself.
    """
    points = getattr(args, "points", None)
    if points is not None:
        config = Configuration.from_json_dict(_read_json(points))
        spec = config.spec
        for name, got in (("d", spec.d), ("n", spec.n), ("c", spec.c)):
            want = getattr(args, name, None)
            if want is not None and want != got:
                raise ValidationError(
                    f"--{name} {want} disagrees with the points file ({got})"
                )
        return config
    missing = [k for k in ("d", "n", "c", "seed") if getattr(args, k, None) is None]
    if missing:
        raise ValidationError(
            "need --points or all of --d/--n/--c/--seed (missing: "
            + ", ".join("--" + m for m in missing)
            + ")"
        )
    return sample_configuration(GridSpec(args.d, args.n, args.c), args.seed)


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n.replace("-", "_"), None) is None]
    if missing:
        raise ValidationError("missing " + ", ".join("--" + n for n in missing))


def _cmd_sample(args) -> int:
    _require(args, "d", "n", "c", "seed")
    cfg = CliConfig(
        subcommand="sample", seed=args.seed, d=args.d, n=args.n, c=args.c, out=args.out
    )
    config = sample_configuration(GridSpec(cfg.d, cfg.n, cfg.c), cfg.seed)
    _emit(config.to_json_dict(), cfg.out)
    return 0


def _cmd_bounds(args) -> int:
    config = _load_configuration(args)
    brute = {"auto": None, "always": True, "never": False}[args.brute]
    report = bounds_report(config, level=args.l, radius=args.radius, brute=brute)
    _emit(report.to_json_dict(), args.out)
    return 0


def _default_level(config: Configuration, requested: int | None) -> int:
    if requested is not None:
        return requested
    return feasible_level(config, max(1, level_for(config.spec.n)))


def _cmd_transport(args) -> int:
    config = _load_configuration(args)
    level = _default_level(config, args.l)
    counts = cell_counts(config, 1 << level)
    plan = build_dyadic_transport(density_from_counts(counts, config.spec.n))
    metrics = transport_metrics(plan)
    check = verify_mass_preservation(plan)
    _emit(
        {
            "level": level,
            "plan": plan_to_json_dict(plan),
            "metrics": {
                "max_image_diameter": fraction_str(metrics.max_image_diameter),
                "per_cell_lipschitz": fraction_str(metrics.per_cell_lipschitz),
                "coherence": fraction_str(metrics.coherence),
            },
            "mass_preserved": check.ok,
        },
        args.out,
    )
    return 0


def _cmd_match(args) -> int:
    config = _load_configuration(args)
    if args.plan is not None:
        payload = _read_json(args.plan)
        if isinstance(payload, dict) and "plan" in payload:
            payload = payload["plan"]
        plan = plan_from_json_dict(payload)
    else:
        level = _default_level(config, args.l)
        counts = cell_counts(config, 1 << level)
        plan = build_dyadic_transport(density_from_counts(counts, config.spec.n))
    radius = args.radius if args.radius is not None else Fraction(1, config.spec.n)
    outcome = solve_matching(build_instance(config, plan, radius))
    if isinstance(outcome, HallViolation):
        if radius >= Fraction(1, config.spec.n):
            raise InternalInvariantError(
                "Hall violation at radius >= 1/n; the covering argument excludes this"
            )
        _emit(
            {
                "outcome": "violation",
                "radius": fraction_str(radius),
                "sources": [list(p) for p in outcome.sources],
                "neighborhood": [list(t) for t in outcome.neighborhood],
            },
            args.out,
        )
        return 0
    _emit(
        {"outcome": "certificate", "certificate": outcome.to_json_dict()},
        args.out,
    )
    return 0


def _cmd_stats(args) -> int:
    _require(args, "table")
    table = args.table
    if table == "entropy":
        if args.t is None:
            raise ValidationError("entropy table needs --t")
        t = args.t
        row = {"t": fraction_str(t), "entropy": entropy(t)}
        row["derivative"] = entropy_derivative(t) if 0 < t < 1 else None
        _emit(row, args.out)
    elif table == "stirling":
        if args.p is None or args.q is None:
            raise ValidationError("stirling table needs --p and --q")
        p, q = args.p, args.q
        lo, hi = stirling_sandwich(p, q)
        lo2, hi2 = stirling_sandwich_log2(p, q)
        _emit(
            {
                "p": p,
                "q": q,
                "lower": lo,
                "upper": hi,
                "lower_log2": lo2,
                "upper_log2": hi2,
            },
            args.out,
        )
    elif table == "hypergeom":
        for name in ("size_x", "size_y", "draws"):
            if getattr(args, name) is None:
                raise ValidationError(f"hypergeom table needs --{name.replace('_', '-')}")
        if args.k is not None:
            exact = hypergeom_pmf(args.size_x, args.size_y, args.draws, args.k)
            row = {
                "k": args.k,
                "pmf": fraction_str(exact),
                "pmf_float": float(exact),
                "pmf_log2": hypergeom_pmf_log2(
                    args.size_x, args.size_y, args.draws, args.k
                ),
            }
        elif args.lo is not None and args.hi is not None:
            exact = hypergeom_tail(args.size_x, args.size_y, args.draws, args.lo, args.hi)
            row = {
                "lo": args.lo,
                "hi": args.hi,
                "tail": fraction_str(exact),
                "tail_float": float(exact),
                "tail_log2": hypergeom_tail_log2(
                    args.size_x, args.size_y, args.draws, args.lo, args.hi
                ),
            }
        else:
            raise ValidationError("hypergeom table needs --k or both --lo and --hi")
        row.update({"size_x": args.size_x, "size_y": args.size_y, "draws": args.draws})
        _emit(row, args.out)
    elif table == "gamma":
        for name in ("size_x", "size_y", "draws", "k"):
            if getattr(args, name) is None:
                raise ValidationError(f"gamma table needs --{name.replace('_', '-')}")
        exact = hypergeom_pmf(args.size_x, args.size_y, args.draws, args.k)
        _emit(
            {
                "size_x": args.size_x,
                "size_y": args.size_y,
                "draws": args.draws,
                "k": args.k,
                "gamma": gamma_exponent(args.size_x, args.size_y, args.draws, args.k),
                "pmf_float": float(exact),
                "pmf_upper": pmf_upper_via_entropy(
                    args.size_x, args.size_y, args.draws, args.k
                ),
            },
            args.out,
        )
    else:  # bonnet
        for name in ("size_x", "size_y", "draws", "m", "a", "b"):
            if getattr(args, name) is None:
                raise ValidationError(f"bonnet table needs --{name.replace('_', '-')}")
        params = TailBoundParams(
            delta=args.delta,
            N=args.draws,
            M=args.m,
            a=args.a,
            b=args.b,
            sizeX=args.size_x,
            sizeY=args.size_y,
            Gamma=args.gamma_fit,
        )
        low, high = bonnet_tail_bounds(params, sharper_prefactor=args.sharper)
        _emit({"low": low, "high": high, "gamma_fit": args.gamma_fit}, args.out)
    return 0


def _build_plan(args) -> ExperimentPlan:
    _require(args, "d", "n")
    cfg = CliConfig(
        subcommand=args.cmd,
        d=args.d,
        q=args.q,
        alpha=args.alpha,
        trials=args.trials,
        seed=args.master_seed,
        format=args.format,
        out=getattr(args, "out", None),
    )
    q = cfg.q
    if args.c_strategy == "sharper":
        if cfg.alpha is None:
            raise ValidationError("sharper strategy needs --alpha")
        derived = cfg.alpha / cfg.d
        if q is None:
            q = derived
        elif q != derived:
            raise ValidationError("sharper fixes q = alpha/d; drop --q or match it")
    elif q is None:
        q = 2.0
    # config files may hand lists straight through; normalize once more
    return ExperimentPlan(
        d=cfg.d,
        n_list=_int_list(args.n),
        q=q,
        c_strategy=args.c_strategy,
        c_values=None if args.c is None else _fraction_list(args.c),
        alpha=cfg.alpha,
        e_values=None if args.e is None else _fraction_list(args.e),
        trials=cfg.trials,
        master_seed=args.master_seed,
        threshold_scales=_float_list(args.scales),
    )


def _run_study(args):
    plan = _build_plan(args)
    if args.cmd in ("deviation",) or getattr(args, "study", None) == "deviation":
        return deviation_study(plan, gamma_dev=args.gamma_dev, jobs=args.jobs)
    return scaling_study(plan, jobs=args.jobs)


def _cmd_study(args) -> int:
    result = _run_study(args)
    if args.format == "csv":
        _emit_text(result.to_csv(), args.out)
    else:
        _emit(result.to_summary_dict(), args.out)
    return 0


def _cmd_report(args) -> int:
    from . import figures  # matplotlib import deferred to the one path that draws

    _require(args, "study", "outdir")
    args.cmd = args.study
    result = _run_study(args)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [
        outdir / "records.csv",
        outdir / "summary.json",
        outdir / "events.jsonl",
    ]
    written[0].write_text(result.to_csv())
    written[1].write_text(result.to_summary_json() + "\n")
    written[2].write_text(result.to_events_jsonl())
    if args.study == "deviation":
        written += figures.render_deviation(result, outdir)
    else:
        written += figures.render_scaling(result, outdir)
    _emit({"written": [str(p) for p in written]}, None)
    return 0


def _cmd_verify(args) -> int:
    _require(args, "certificate")
    cert = BijectionCertificate.from_json_dict(_read_json(args.certificate))
    config = _load_configuration(args)
    counts = cell_counts(config, 1 << cert.level)
    plan = build_dyadic_transport(density_from_counts(counts, config.spec.n))
    problems = verify_certificate(cert, config, plan)
    if problems:
        raise InternalInvariantError("; ".join(problems))
    _emit({"ok": True, "lipschitz": cert.lipschitz}, args.out)
    return 0


def _add_geometry(sub, seed_required=False, points=True) -> None:
    sub.add_argument("--d", type=int, help="dimension")
    sub.add_argument("--n", type=int, help="grid side")
    sub.add_argument("--c", type=_fraction, help='box scale, e.g. "3/2"')
    sub.add_argument("--seed", type=int, required=seed_required, help="sampling seed")
    if points:
        sub.add_argument("--points", help="configuration JSON file, or - for stdin")


def _add_study_flags(sub, with_format=True) -> None:
    sub.add_argument("--d", type=int, required=True)
    sub.add_argument("--n", type=_int_list, required=True, help="comma list, e.g. 8,16,32")
    sub.add_argument("--q", type=float, default=None)
    sub.add_argument(
        "--c-strategy",
        choices=("theorem_main", "sharper", "fixed"),
        default="theorem_main",
    )
    sub.add_argument("--c", type=_fraction_list, default=None, help="comma list for fixed")
    sub.add_argument("--alpha", type=float, default=None)
    sub.add_argument("--e", type=_fraction_list, default=None, help="e_n list for sharper")
    sub.add_argument("--trials", type=int, default=100)
    sub.add_argument("--master-seed", type=int, default=0)
    sub.add_argument("--scales", type=_float_list, default=(1.0,))
    sub.add_argument("--jobs", type=int, default=1)
    sub.add_argument("--gamma-dev", type=float, default=None)
    if with_format:
        sub.add_argument("--format", choices=("json", "csv"), default="csv")
        sub.add_argument("--out")


def build_parser():
    parser = _Parser(prog="gridlip", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--config", help="JSON file of default flag values")
    subs = parser.add_subparsers(dest="cmd", required=True)
    dests: dict[str, set[str]] = {}
    subparser_map: dict[str, _Parser] = {}

    def register(name: str, **kwargs):
        sp = subs.add_parser(name, **kwargs)
        dests[name] = set()
        subparser_map[name] = sp
        original = sp.add_argument

        def tracked(*a, **kw):
            action = original(*a, **kw)
            dests[name].add(action.dest)
            return action

        sp.add_argument = tracked
        return sp

    sp = register("sample", help="emit a random configuration as JSON")
    sp.add_argument("--d", type=int)
    sp.add_argument("--n", type=int)
    sp.add_argument("--c", type=_fraction)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_sample)

    sp = register("bounds", help="packing / brute force / pipeline bounds report")
    _add_geometry(sp)
    sp.add_argument("--l", type=int, default=None, help="dyadic level")
    sp.add_argument("--radius", type=_fraction, default=None)
    sp.add_argument("--brute", choices=("auto", "always", "never"), default="auto")
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_bounds)

    sp = register("transport", help="build the dyadic transport plan")
    _add_geometry(sp)
    sp.add_argument("--l", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_transport)

    sp = register("match", help="neighborhood matching on a transport plan")
    _add_geometry(sp)
    sp.add_argument("--l", type=int, default=None)
    sp.add_argument("--plan", help="transport plan JSON (file); default rebuilds at --l")
    sp.add_argument("--radius", type=_fraction, default=None)
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_match)

    sp = register("stats", help="entropy / stirling / hypergeom / gamma / bonnet tables")
    sp.add_argument(
        "--table",
        choices=("entropy", "stirling", "hypergeom", "gamma", "bonnet"),
    )
    sp.add_argument("--t", type=_fraction, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--q", type=int, default=None)
    sp.add_argument("--size-x", type=int, default=None)
    sp.add_argument("--size-y", type=int, default=None)
    sp.add_argument("--draws", type=int, default=None)
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--lo", type=int, default=None)
    sp.add_argument("--hi", type=int, default=None)
    sp.add_argument("--m", type=_fraction, default=None)
    sp.add_argument("--delta", type=_fraction, default=Fraction(0))
    sp.add_argument("--a", type=_fraction, default=None)
    sp.add_argument("--b", type=_fraction, default=None)
    sp.add_argument("--gamma-fit", type=float, default=1000.0)
    sp.add_argument("--sharper", action="store_true")
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_stats)

    sp = register("deviation", help="cell-count deviation study")
    _add_study_flags(sp)
    sp.set_defaults(handler=_cmd_study)

    sp = register("scaling", help="pipeline constant scaling study")
    _add_study_flags(sp)
    sp.set_defaults(handler=_cmd_study)

    sp = register("verify", help="re-validate a saved certificate")
    _add_geometry(sp)
    sp.add_argument("--certificate")
    sp.add_argument("--out")
    sp.set_defaults(handler=_cmd_verify)

    sp = register("report", help="run a study and write CSV, JSON, and figures")
    sp.add_argument("--study", choices=("deviation", "scaling"))
    _add_study_flags(sp, with_format=False)
    sp.add_argument("--outdir")
    sp.set_defaults(handler=_cmd_report, format="csv", out=None)

    return parser, dests, subparser_map


def _apply_config_file(subparser_map, dests, argv: list[str]):
    # allow_abbrev matters: --c must not be read as an abbreviated --config
    pre = _Parser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    payload = _read_json(known.config)
    if not isinstance(payload, dict):
        raise ValidationError("--config must hold a JSON object of flag values")
    mapped = {str(k).replace("-", "_"): v for k, v in payload.items()}
    for name, sp in subparser_map.items():
        usable = {k: v for k, v in mapped.items() if k in dests[name]}
        if usable:
            sp.set_defaults(**usable)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, dests, subparser_map = build_parser()
        _apply_config_file(subparser_map, dests, argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # -h/--help
            return int(exc.code or 0)
        return args.handler(args)
    except ValidationError as exc:
        _error_json(exc)
        return 1
    except RegimeError as exc:
        _error_json(exc)
        return 2
    except InternalInvariantError as exc:
        _error_json(exc)
        return 3
    except GridlipError as exc:
        _error_json(exc)
        return 3
    except BrokenPipeError:
        return 0
    except Exception as exc:  # pragma: no cover - last resort
        _error_json(exc)
        return 3


def _error_json(exc: BaseException) -> None:
    sys.stderr.write(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
    )


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

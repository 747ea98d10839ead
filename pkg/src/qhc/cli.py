"""Command-line entry point: ``qhc ch | berry | theta | check``.

Exit codes: 0 success, 1 mismatch or failed criterion, 2 usage error,
3 inconclusive Monte-Carlo result.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

from . import acceptance
from .berry import (
    Budget,
    UndersamplingError,
    conjugation_check,
    default_frozen_quasiholes,
    slice_chern_number,
    write_density_csv,
    write_run,
)
from .chern import (
    ChernClass,
    CollectError,
    MultilayerConfig,
    PreconditionError,
    ResourceLimitError,
    SingleLayerConfig,
    ValidityWarning,
    ch_general,
    ch_multilayer,
    ch_with_picard,
    grr_oracle,
    multilayer_grr_oracle,
    picard_oracle,
)
from .laughlin import SphereData, TorusData
from .theta import ThetaDomainError, Truncation, theta_char_eval, theta_eval

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def parse_complex(text: str) -> complex:
    """'re,im' or a bare real number."""
    parts = text.split(",")
    try:
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) == 2:
            return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        pass
    raise argparse.ArgumentTypeError(f"expected 're,im' or a real number, got {text!r}")


def parse_pair(text: str) -> tuple[float, float]:
    z = parse_complex(text)
    return z.real, z.imag


def _emit(payload: dict, text: str, args) -> None:
    if args.format == "json":
        out = json.dumps(payload, indent=1, sort_keys=True)
    else:
        out = text
    print(out)
    if getattr(args, "output", None):
        Path(args.output).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


# --- ch ----------------------------------------------------------------------


def _single_config(args) -> SingleLayerConfig:
    missing = [f"--{k}" for k in ("b", "c", "d", "g", "n", "m") if getattr(args, k) is None]
    if missing:
        raise UsageError(f"missing {', '.join(missing)} (or pass --config)")
    return SingleLayerConfig(b=args.b, c=args.c, d=args.d, g=args.g, n=args.n, m=args.m)


def cmd_ch(args) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ValidityWarning)
        if args.config:
            try:
                data = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config: {exc}") from exc
            try:
                cfg = MultilayerConfig.from_json(data)
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"bad multilayer config: {exc}") from exc
            params = {"config": cfg.to_json()}
            cls = ch_multilayer(cfg, args.truncation)
            oracle = (lambda: multilayer_grr_oracle(cfg, args.truncation)) if args.oracle else None
        else:
            cfg = _single_config(args)
            params = {k: getattr(args, k) for k in ("b", "c", "d", "g", "n", "m")}
            if args.picard:
                cls = ch_with_picard(cfg, args.truncation, check=False)
                oracle = (lambda: picard_oracle(cfg, args.truncation)) if args.oracle else None
            else:
                cls = ch_general(cfg, args.truncation)
                oracle = (lambda: grr_oracle(cfg, args.truncation)) if args.oracle else None
        verdict = None
        if oracle is not None:
            verdict = "MATCH" if oracle() == cls else "MISMATCH"
    for message in dict.fromkeys(str(w.message) for w in caught):
        print(f"warning: {message}", file=sys.stderr)
    payload = {"command": "ch", "params": params, "picard": bool(args.picard), "class": cls.to_json()}
    lines = [str(cls), f"rank {_fmt_rank(cls)}"]
    if verdict is not None:
        payload["oracle"] = verdict
        lines.append(f"oracle: {verdict}")
    _emit(payload, "\n".join(lines), args)
    return EXIT_MISMATCH if verdict == "MISMATCH" else EXIT_OK


def _fmt_rank(cls: ChernClass) -> str:
    r = cls.rank
    return str(r.numerator) if r.denominator == 1 else f"{r.numerator}/{r.denominator}"


# --- berry -------------------------------------------------------------------


def cmd_berry(args) -> int:
    if args.genus == 0:
        data = SphereData(args.b, args.n, args.m)
        tau = None
    else:
        tau = args.tau
        data = TorusData(tau, args.b, args.n, args.m)
    budget = Budget(samples=args.samples, grid=args.grid, seed=args.seed, frozen=args.frozen)
    frozen_w = default_frozen_quasiholes(data)
    result = slice_chern_number(data, budget, frozen_w)
    conj = None
    if args.genus == 1:
        conj = conjugation_check([0.37 + 0.41 * tau] + frozen_w, data,
                                 Budget(samples=args.samples, seed=args.seed))
    extra = {"command": "berry"}
    if conj is not None:
        extra["conjugation"] = {"ok": conj.ok, "max_ratio_translation": conj.max_ratio_translation,
                                "max_ratio_modular": conj.max_ratio_modular, "violations": conj.violations}
    if args.output:
        write_run(args.output, result, extra)
    if args.csv:
        write_density_csv(args.csv, result)
    print(f"measured  {result.measured:.6f} ± {result.combined_error:.2e} "
          f"(stat {result.stat_error:.1e}, discretization {result.discretization_error_estimate:.1e})")
    print(f"predicted {result.predicted}")
    if result.periodic_flux is not None:
        print(f"periodic-part flux {result.periodic_flux:.2e} ± {result.periodic_flux_error:.1e}; "
              f"analytic h_w flux {result.analytic_flux:g}")
    if result.chart_fluxes is not None:
        print(f"chart fluxes w {result.chart_fluxes['w']:.5f}, 1/w {result.chart_fluxes['u']:.5f}; "
              f"split-radius difference {result.chart_independence:.1e}")
    if conj is not None:
        print(f"conjugation laws: {'ok' if conj.ok else 'VIOLATED'} "
              f"(max {max(conj.max_ratio_translation, conj.max_ratio_modular):.2f} standard errors)")
    if result.inconclusive:
        print("inconclusive: error bars exceed half the gap to the nearest integer; "
              "increase --samples (statistical) or --grid (discretization)", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    if not result.agrees() or (conj is not None and not conj.ok):
        print("MISMATCH")
        return EXIT_MISMATCH
    print("MATCH")
    return EXIT_OK


# --- theta -------------------------------------------------------------------


def cmd_theta(args) -> int:
    trunc = Truncation(N=args.N, eps=args.eps)
    if args.char is None:
        v = theta_eval(args.z, args.tau, trunc)
    else:
        a, b = args.char
        v = theta_char_eval(a, b, args.z, args.tau, trunc)
    payload = {"command": "theta", "z": [args.z.real, args.z.imag], "tau": [args.tau.real, args.tau.imag],
               "char": list(args.char) if args.char else None,
               "value": [v.value.real, v.value.imag], "tail_bound": v.tail_bound, "N": v.N}
    if v.value.imag == 0:
        shown = f"{v.value.real:.16g}"
    else:
        shown = f"{v.value.real:.16g}{v.value.imag:+.16g}j"
    _emit(payload, f"{shown}\ntail bound {v.tail_bound:.3e} (N={v.N})", args)
    return EXIT_OK


# --- check -------------------------------------------------------------------


def cmd_check(args) -> int:
    names = set(args.only) if args.only else None
    if names:
        known = {c.name for c in acceptance.CRITERIA}
        unknown = names - known
        if unknown:
            raise UsageError(f"unknown criteria {sorted(unknown)}; choose from {sorted(known)}")
    results = acceptance.run_criteria(full=args.full, names=names,
                                      echo=(lambda line: print(line, flush=True)) if args.verbose else None)
    print(acceptance.format_table(results))
    if args.output:
        Path(args.output).write_text(json.dumps(
            [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results], indent=1) + "\n")
    return EXIT_OK if all(r.passed for r in results) else EXIT_MISMATCH


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhc", description="Chern classes of Laughlin-state bundles and "
                                     "numerical Berry-curvature checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    ch = sub.add_parser("ch", help="Chern character of the Laughlin-state bundle")
    for name in ("b", "c", "d", "g", "n", "m"):
        ch.add_argument(f"--{name}", type=int)
    ch.add_argument("--config", help="multilayer JSON: {K, C, n, m, d, g}")
    ch.add_argument("--picard", action="store_true", help="include the Picard (flux) generators")
    ch.add_argument("--oracle", action="store_true", help="also run the Berezin oracle and compare")
    ch.add_argument("--truncation", type=int, help="keep ξ powers up to this exponent")
    ch.add_argument("--format", choices=("text", "json"), default="text")
    ch.add_argument("--output", help="write the JSON record here")
    ch.set_defaults(func=cmd_ch)

    berry = sub.add_parser("berry", help="Monte-Carlo slice Chern number")
    berry.add_argument("--genus", type=int, choices=(0, 1), required=True)
    berry.add_argument("--b", type=int, required=True)
    berry.add_argument("--n", type=int, required=True)
    berry.add_argument("--m", type=int, required=True)
    berry.add_argument("--samples", type=int, default=200_000)
    berry.add_argument("--grid", type=int, default=24)
    berry.add_argument("--seed", type=int, default=7)
    berry.add_argument("--tau", type=parse_complex, default=complex(0, 1), help="re,im (torus only)")
    berry.add_argument("--frozen", action="store_true", help="test mode: hold the Gram matrix fixed")
    berry.add_argument("--output", help="JSON run file")
    berry.add_argument("--csv", help="CSV of curvature densities per grid node")
    berry.set_defaults(func=cmd_berry)

    th = sub.add_parser("theta", help="evaluate θ or θ[a;b] with a certified tail bound")
    th.add_argument("--z", type=parse_complex, required=True)
    th.add_argument("--tau", type=parse_complex, required=True)
    th.add_argument("--char", type=parse_pair, help="a,b")
    th.add_argument("--eps", type=float, default=1e-17)
    th.add_argument("--N", type=int, help="fixed half-width instead of the adaptive choice")
    th.add_argument("--format", choices=("text", "json"), default="text")
    th.add_argument("--output")
    th.set_defaults(func=cmd_theta)

    check = sub.add_parser("check", help="run the acceptance criteria")
    check.add_argument("--full", action="store_true", help="include the Monte-Carlo criteria (minutes)")
    check.add_argument("--only", action="append", help="run only the named criterion (repeatable)")
    check.add_argument("--verbose", action="store_true", help="print each result as it finishes")
    check.add_argument("--output", help="JSON summary")
    check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except (UsageError, PreconditionError, ThetaDomainError, ValueError, ResourceLimitError, CollectError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UndersamplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

    citest test data.csv --model ex1a --seed 7
    citest generate ex1a --n 50 --r 0 --seed 1 -o data.csv
    citest power --scenario ex1a -o ex1a.csv
    citest pitman -o pitman.csv
    citest highdim --scenario ex4a -o ex4a.csv

Exit status is 0 on success and 2 on bad input; a rejected null hypothesis is
reported in the output, never through the exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .calibration import crt_p_value, exact_p_value, randomized_p_value
from .estimator import augment, standardized
from .harness import (DEFAULT_R_GRID, StudyError, StudyMethod, StudySpec, default_workers,
                      ex2_grid, ex3_grid, ex4_grid, pitman_grid, run_study)
from .io import InputError, PowerCsvWriter, fmt_float, read_config, read_dataset, write_dataset
from .kernel_core import BandwidthRule, KernelConfig, build_gram
from .models import (DEFAULT_MIX_VARIANCES, Scenario, ScenarioName, conditional_model,
                     draw_rows, gaussian_linear_model)

log = logging.getLogger("citest")

EXIT_OK = 0
EXIT_INPUT = 2


def _floats(text, what="value"):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"bad {what} list {text!r}") from None


def _ints(text, what="value"):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise InputError(f"bad {what} list {text!r}") from None


def _matrix(text, what):
    rows = [r for r in str(text).split(";") if r.strip()]
    vals = [_floats(r, what) for r in rows]
    if not vals or len({len(r) for r in vals}) != 1:
        raise InputError(f"{what} must be rows of equal length separated by ';'")
    return np.array(vals)


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InputError(f"expected a boolean, got {text!r}")


def _kernel(args) -> KernelConfig:
    rule = BandwidthRule(args.sigma_rule)
    if rule is BandwidthRule.FIXED:
        if args.sigma_sq is None:
            raise InputError("--sigma-rule fixed needs --sigma-sq")
        try:
            return KernelConfig.fixed(args.sigma_sq)
        except ValueError as exc:
            raise InputError(str(exc)) from None
    return KernelConfig(rule)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    seed = int(np.random.SeedSequence().entropy % (1 << 63))
    log.info("no --seed given; using seed %d", seed)
    print(f"citest: no --seed given; using seed {seed}", file=sys.stderr)
    return seed


def _mix(args):
    v = _floats(args.mix_variances, "mixture variance")
    if len(v) != 2 or min(v) <= 0:
        raise InputError("--mix-variances needs two positive numbers")
    return tuple(v)


MODEL_CHOICES = ["gaussian-linear", "ex1a", "ex1b", "ex1c", "ex2", "ex3", "pitman"]


def _model(args, d):
    name = args.model
    if name == "gaussian-linear":
        if args.coeff is None or args.noise_cov is None:
            raise InputError("gaussian-linear needs --coeff and --noise-cov")
        coeff = _matrix(args.coeff, "--coeff")
        intercept = _floats(args.intercept, "--intercept") if args.intercept else [0.0]
        try:
            return gaussian_linear_model(intercept, coeff, _matrix(args.noise_cov, "--noise-cov"))
        except ValueError as exc:
            raise InputError(f"invalid model parameters: {exc}") from None
    # X | Z is shared by the a/b variants of each example
    if name == "ex2":
        return conditional_model(Scenario("ex2a", n=2, mix_variances=_mix(args)))
    if name == "ex3":
        return conditional_model(Scenario("ex3a", n=2, d=d.d_z, mix_variances=_mix(args)))
    return conditional_model(Scenario(name, n=2))


def cmd_test(args) -> int:
    cfg = _kernel(args)
    data = read_dataset(args.input, args.x, args.y, args.z)
    model = _model(args, data)
    if model.d_x != data.d_x or model.d_z != data.d_z:
        raise InputError(f"model {args.model} expects d_x={model.d_x}, d_z={model.d_z}; "
                         f"data has d_x={data.d_x}, d_z={data.d_z}")
    if args.standardize and args.method == "crt":
        raise InputError("--standardize is only available for flip calibration")
    seed = _seed(args)
    rng = np.random.default_rng(seed)
    sigma_sq = None
    if args.method == "crt":
        out = crt_p_value(data, model, cfg, args.B, rng, args.alpha, seed)
    else:
        aug = augment(data, model, rng)
        if args.standardize:
            aug = standardized(aug)
        gram = build_gram(aug, cfg)
        sigma_sq = gram.sigma_sq
        if args.method == "exact":
            if gram.n > 20:
                raise InputError(f"exact enumeration needs n <= 20 (n = {gram.n}); "
                                 "use --method randomized")
            out = exact_p_value(gram, args.alpha)
        else:
            out = randomized_p_value(gram, args.B, rng, args.alpha, seed)
    record = out.as_dict()
    record.update(n=data.n, d_x=data.d_x, d_y=data.d_y, d_z=data.d_z, model=model.descriptor,
                  sigma_rule=cfg.bandwidth_rule.value, sigma_sq=sigma_sq, seed=seed,
                  input=str(args.input))
    lines = [
        f"n          {data.n}  (d_x={data.d_x}, d_y={data.d_y}, d_z={data.d_z})",
        f"model      {model.descriptor}",
        f"method     {out.method.value} ({out.n_resamples} resamples)",
        f"statistic  {fmt_float(out.statistic)}",
        f"p-value    {fmt_float(out.p_value)}",
    ]
    if out.critical_value is not None:
        lines.append(f"critical   {fmt_float(out.critical_value)}")
    verdict = "reject H0" if out.reject else "do not reject H0"
    lines += [f"decision   {verdict} at alpha={fmt_float(out.alpha)}", f"seed       {seed}"]
    print("\n".join(lines))
    if args.output:
        try:
            with open(args.output, "w") as fh:
                json.dump(record, fh, indent=2, sort_keys=True)
                fh.write("\n")
        except OSError as exc:
            raise InputError(f"{args.output}: cannot write ({exc.strerror})") from None
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        s = Scenario(args.scenario, n=args.n, r=args.r, d=args.d, beta=args.beta,
                     mix_variances=_mix(args))
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rng = np.random.default_rng(_seed(args))
    try:
        write_dataset(args.output, draw_rows(s, s.n, rng))
    except OSError as exc:
        raise InputError(f"{args.output}: cannot write ({exc.strerror})") from None
    return EXIT_OK


def _run_grid(args, grid) -> int:
    spec = StudySpec(grid, StudyMethod(args.method), args.alpha, args.B, args.reps,
                     _seed(args), args.workers or default_workers(), _kernel(args))
    if args.output in (None, "-"):
        fh, close = sys.stdout, False
    else:
        try:
            fh, close = open(args.output, "w", newline=""), True
        except OSError as exc:
            raise InputError(f"{args.output}: cannot write ({exc.strerror})") from None
    try:
        run_study(spec, PowerCsvWriter(fh, timing=not args.omit_timing))
    except StudyError as exc:
        log.error("%s (%d cells written)", exc, len(exc.partial))
        return 1
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _scenarios(build):
    try:
        return build()
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_power(args) -> int:
    name = ScenarioName(args.scenario)
    mix = _mix(args)

    def build():
        v = name.value
        if v.startswith("ex1"):
            rs = _floats(args.r, "r") if args.r else DEFAULT_R_GRID
            ns = _ints(args.n, "n") if args.n else [50]
            return [Scenario(name, n=n, r=r) for n in ns for r in rs]
        if v.startswith("ex2"):
            ns = _ints(args.n, "n") if args.n else list(range(10, 101, 10))
            return [Scenario(name, n=n, mix_variances=mix) for n in ns]
        if v.startswith("ex3"):
            ks = _ints(args.log2_d, "log2 d") if args.log2_d else range(1, 11)
            ns = _ints(args.n, "n") if args.n else [50]
            return [Scenario(name, n=n, d=2 ** k, mix_variances=mix) for n in ns for k in ks]
        if v.startswith("ex4"):
            ks = _ints(args.log2_d, "log2 d") if args.log2_d else range(1, 6)
            return [Scenario(name, d=2 ** k, mix_variances=mix) for k in ks]
        betas = _floats(args.beta, "beta") if args.beta else [0.0]
        ns = _ints(args.n, "n") if args.n else [100]
        return [Scenario(name, n=n, beta=b) for b in betas for n in ns]

    return _run_grid(args, _scenarios(build))


def cmd_pitman(args) -> int:
    betas = _floats(args.betas, "beta")
    ns = _ints(args.ns, "n")
    return _run_grid(args, _scenarios(lambda: pitman_grid(betas, ns)))


def cmd_highdim(args) -> int:
    variant = args.scenario[-1]
    ks = _ints(args.log2_d, "log2 d")
    mix = _mix(args)
    if args.scenario.startswith("ex4"):
        grid = _scenarios(lambda: [Scenario(s.name, d=s.d, mix_variances=mix)
                                   for s in ex4_grid(variant, ks)])
    else:
        grid = _scenarios(lambda: [Scenario(s.name, n=args.n, d=s.d, mix_variances=mix)
                                   for s in ex3_grid(variant, ks, args.n)])
    return _run_grid(args, grid)


def _common(p, study):
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level (default 0.05)")
    p.add_argument("--B", type=int, default=500,
                   help="flip draws, or CRT replicates (default 500)")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed; a random one is chosen and printed if omitted")
    p.add_argument("--sigma-rule", default="inverse-dimension",
                   choices=[r.value for r in BandwidthRule],
                   help="kernel scale rule (default inverse-dimension: sigma^2 = 1/d)")
    p.add_argument("--sigma-sq", type=float, default=None, help="kernel scale for --sigma-rule fixed")
    p.add_argument("--mix-variances", default=",".join(str(v) for v in DEFAULT_MIX_VARIANCES),
                   help="component variances of the ex2-ex4 noise mixture (default 1,100)")
    p.add_argument("--config", default=None, help="key = value file mirroring these flags")
    if study:
        p.add_argument("--method", default="aug", choices=[m.value for m in StudyMethod])
        p.add_argument("--reps", type=int, default=1000, help="replications per cell")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $CITEST_THREADS or 1)")
        p.add_argument("-o", "--output", default="-", help="CSV path (default stdout)")
        p.add_argument("--omit-timing", action="store_true",
                       help="leave wall_ms empty so reruns are byte-identical")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="citest", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"citest {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="test X independent of Y given Z on a CSV file")
    p.add_argument("input", help="headered CSV; x_*, y_*, z_* columns by default")
    p.add_argument("--x", type=lambda s: s.split(","), default=None, help="X columns")
    p.add_argument("--y", type=lambda s: s.split(","), default=None, help="Y columns")
    p.add_argument("--z", type=lambda s: s.split(","), default=None, help="Z columns")
    p.add_argument("--model", required=True, choices=MODEL_CHOICES,
                   help="known law of X given Z")
    p.add_argument("--intercept", default=None, help="gaussian-linear intercept, e.g. 0,0")
    p.add_argument("--coeff", default=None, help="gaussian-linear d_x x d_z matrix, rows split by ';'")
    p.add_argument("--noise-cov", default=None, help="gaussian-linear noise covariance")
    p.add_argument("--method", default="randomized", choices=["randomized", "exact", "crt"])
    p.add_argument("--standardize", action="store_true",
                   help="scale coordinates to unit variance before the kernel")
    p.add_argument("-o", "--output", default=None, help="write a JSON result record here")
    _common(p, study=False)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("generate", help="write a simulated dataset as CSV")
    p.add_argument("scenario", choices=[s.value for s in ScenarioName])
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--r", type=float, default=0.0)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    _common(p, study=False)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("power", help="power/size study over one scenario family")
    p.add_argument("--scenario", required=True, choices=[s.value for s in ScenarioName])
    p.add_argument("--r", default=None, help="comma list of r (ex1*)")
    p.add_argument("--n", default=None, help="comma list of sample sizes")
    p.add_argument("--log2-d", default=None, help="comma list of log2(d) (ex3*, ex4*)")
    p.add_argument("--beta", default=None, help="comma list of beta (pitman)")
    _common(p, study=True)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("pitman", help="local-alternative study")
    p.add_argument("--betas", default="1,3,5,7,9")
    p.add_argument("--ns", default="100,200,300,400,500")
    _common(p, study=True)
    p.set_defaults(func=cmd_pitman)

    p = sub.add_parser("highdim", help="power against dim(Z) (ex3*: fixed n, ex4*: n = d^2 + 20)")
    p.add_argument("--scenario", default="ex4a", choices=["ex3a", "ex3b", "ex4a", "ex4b"])
    p.add_argument("--log2-d", default="1,2,3,4,5")
    p.add_argument("--n", type=int, default=50, help="sample size for ex3*")
    _common(p, study=True)
    p.set_defaults(func=cmd_highdim)
    return parser


_BOOL_KEYS = {"standardize", "omit_timing", "verbose"}


def _subparser(parser, command):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices.get(command)


def _apply_config(parser, argv):
    """Install a ``--config`` file's values as defaults of the chosen subcommand.

    Command-line flags still win; a config value also satisfies a required flag.
    """
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    sub = next((_subparser(parser, a) for a in rest if _subparser(parser, a)), None)
    if known.config is None or sub is None:
        return
    values = read_config(known.config)
    actions = {a.dest: a for a in sub._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise InputError(f"{known.config}: unknown key(s) {', '.join(unknown)}")
    for key in _BOOL_KEYS & set(values):
        values[key] = _bool(values[key])
    for key in values:
        actions[key].required = False
    sub.set_defaults(**values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except InputError as exc:
        print(f"citest: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"citest: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

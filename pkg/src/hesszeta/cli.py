"""Command-line interface: ``hesszeta <subcommand> ...``.

Every run writes a manifest (config echo, library versions, seeds) to
stderr or to ``--manifest``.  ``verify`` exits with the number of failed
checks.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from importlib import resources

PRECISION_ENV = "HESSZETA_PRECISION"
DPS = {"double": 15, "extended": 30}


# --------------------------------------------------------------------------
# parsing helpers

def parse_scalar(text: str):
    """``"p/q"`` -> Fraction, ``"re,im"`` -> complex, otherwise float or int."""
    text = text.strip()
    if "," in text:
        re_, im_ = text.split(",", 1)
        z = complex(float(re_), float(im_))
        return z.real if z.imag == 0 else z
    if "/" in text:
        return Fraction(text)
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_vector(text: str) -> list:
    return [parse_scalar(x) for x in text.split()] if " " in text.strip() else \
        [parse_scalar(x) for x in text.split(":")] if ":" in text else \
        [float(x) for x in text.split(",")]


def parse_matrix(text: str) -> list:
    """Rows separated by ``;``, entries by ``,``."""
    return [[float(x) for x in row.split(",")] for row in text.split(";")]


def _jsonable(x):
    import mpmath
    import numpy as np
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, (mpmath.mpf,)):
        return float(x)
    if isinstance(x, (mpmath.mpc, complex)):
        z = complex(x)
        return z.real if z.imag == 0 else [z.real, z.imag]
    return x


def load_schema(name: str) -> dict:
    return json.loads(resources.files("hesszeta.schemas").joinpath(f"{name}.schema.json").read_text())


def validate(obj, name: str) -> None:
    import jsonschema
    jsonschema.validate(obj, load_schema(name))


def manifest(args, argv) -> dict:
    import mpmath
    import numpy
    from . import __version__
    cfg = {k: (v if isinstance(v, (str, int, float, bool, type(None), list)) else str(v))
           for k, v in vars(args).items() if k != "func"}
    return {
        "argv": list(argv),
        "config": cfg,
        "versions": {"hesszeta": __version__, "python": platform.python_version(),
                     "numpy": numpy.__version__,
                     "mpmath": mpmath.__version__},
        "seeds": {"linearization_probes": 0},
        "partitions": 1,
        "threads": args.threads,
        "precision": args.precision,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }


def emit(obj, fmt: str, out, schema: str | None = None, text: str | None = None):
    if fmt == "json":
        obj = _jsonable(obj)
        if schema:
            validate(obj, schema)
        out.write(json.dumps(obj, indent=2) + "\n")
    else:
        out.write((text if text is not None else str(obj)) + "\n")


# --------------------------------------------------------------------------
# subcommands

def cmd_theorem2(args, out) -> int:
    from .heat_symbol import PATTERNS, check_theorem2, theorem2_table
    table = theorem2_table(parallel=args.threads > 1)
    checks = check_theorem2() if args.check else {}
    fails = sum(1 for v in checks.values() if not v)
    if args.format == "json":
        obj = {"patterns": {k: {"pattern": [list(x) if not isinstance(x, str) else x for x in PATTERNS[k]],
                                "expr": table[k].to_json()} for k in sorted(table)}}
        if args.check:
            obj["check"] = {k: ("PASS" if v else "FAIL") for k, v in checks.items()}
        emit(obj, "json", out, "theorem2")
    elif args.format == "latex":
        lines = [r"\documentclass{article}", r"\usepackage{amsmath}", r"\begin{document}",
                 r"\begin{align*}"]
        rows = [rf"\text{{({k})}}\quad & {table[k].to_latex()}" for k in sorted(table)]
        lines.append((r" \\" + "\n").join(rows))
        lines += [r"\end{align*}", r"\end{document}"]
        out.write("\n".join(lines) + "\n")
    else:
        for k in sorted(table):
            out.write(f"({k}) {table[k].to_text()}\n")
    if args.check:
        for k, v in checks.items():
            sys.stderr.write(f"theorem2 ({k}): {'PASS' if v else 'FAIL'}\n")
        sys.stderr.write(f"theorem2: {len(checks) - fails}/{len(checks)} PASS\n")
    return fails


def _builtin_spec(name: str, n: int):
    from .operators import linearize_scalar_family
    if name == "laplacian":
        return linearize_scalar_family(n, 0)
    if name == "conformal":
        return linearize_scalar_family(n, 1)
    raise ValueError(f"unknown built-in operator '{name}'")


def cmd_us(args, out) -> int:
    import numpy as np
    from .operators import assemble_us, load_operator_spec
    from .rational import PoleError
    if args.spec:
        spec = load_operator_spec(args.spec)
    else:
        spec = _builtin_spec(args.builtin, args.n)
    s = parse_scalar(args.s)
    xi = [float(x) for x in args.xi.split(",")]
    h = np.array(parse_matrix(args.h))
    try:
        M = assemble_us(spec, s, xi, h)
    except PoleError as exc:
        sys.stderr.write(f"pole: {exc}\n")
        return 2
    obj = {"n": spec.n, "s": s, "xi": xi, "h": h, "matrix": M,
           "symmetric": bool(np.allclose(M, M.T))}
    emit(obj, args.format, out, "us", text=np.array2string(np.real_if_close(M), precision=12))
    return 0


def _suite_identities(dps):
    from .gamma_rational import check_substitution_table, pole_locations, uv_coefficient
    from .heat_symbol import check_theorem2, theorem2_table
    from .quadrature import eq_1_20_grid, tau_expansion, tau_expansion_fit
    rows = []
    for k, ok in check_theorem2().items():
        rows.append({"name": f"theorem2/{k}", "passed": ok, "error": 0.0, "budget": 0.0})
    for k, ok in check_substitution_table().items():
        rows.append({"name": f"substitution/{k}", "passed": ok, "error": 0.0, "budget": 0.0})
    for r in eq_1_20_grid(dps=max(dps, 20)):
        rows.append({"name": f"eq_gamma_integral/n={r['n']},s={float(r['s']):.4f}",
                     "passed": r["rel_error"] <= 1e-8, "error": r["rel_error"], "budget": 1e-8})
    fit = tau_expansion_fit(5)
    c = fit["coeffs"]
    rows.append({"name": "tau_expansion/C1", "passed": abs(c[0] - 2) <= 1e-6,
                 "error": abs(c[0] - 2), "budget": 1e-6})
    C2 = tau_expansion(2)[1]
    rows.append({"name": "tau_expansion/C2", "passed": abs(c[1] / C2 - 1) <= 1e-4,
                 "error": abs(c[1] / C2 - 1), "budget": 1e-4})
    bad = 0
    for n in (1, 2, 3, 4):
        for e in theorem2_table().values():
            for t in e.terms:
                bad += _bad_poles(t.coeff, n)
        for p in range(5):
            for q in range(5):
                for r in range(min(p, q) + 3):
                    bad += _bad_poles(uv_coefficient(p, q, r)[0], n)
    rows.append({"name": "poles/subset", "passed": bad == 0, "error": float(bad), "budget": 0.0})
    return rows


def _bad_poles(coeff, n):
    from .gamma_rational import pole_locations
    half = Fraction(n, 2)
    return sum(1 for s in pole_locations(coeff, n) if not (s - half > 0 and (s - half).denominator == 1))


def _suite_torus(dps):
    import mpmath
    from .torus import (Constant, CosMode, TorusProblem, epstein_zeta, fd_hessian,
                        hessian_spectral, heat_trace_leading_prediction,
                        heat_trace_second_variation, zcal)
    rows = []
    circ = TorusProblem(1, v_factor=True)
    z1 = epstein_zeta(circ, 1)
    rows.append({"name": "circle/Z(1)", "passed": abs(z1 - mpmath.mpf(1) / 12) <= 1e-10,
                 "error": abs(z1 - mpmath.mpf(1) / 12), "budget": 1e-10})
    zm1 = epstein_zeta(circ, -1)
    rows.append({"name": "circle/Z(-1)", "passed": abs(zm1) <= 1e-10, "error": abs(zm1), "budget": 1e-10})
    for s0 in (mpmath.mpf(1) / 2, mpmath.mpf(0)):
        vals = [zcal(circ, s0 + mpmath.mpf("1e-3") * mpmath.expjpi(mpmath.mpf(k) / 4)) for k in range(8)]
        spread = max(abs(v - vals[0]) for v in vals)
        ok = all(mpmath.isfinite(v) for v in vals) and spread < 1e-2
        rows.append({"name": f"circle/entire_probe(s={float(s0)})", "passed": bool(ok),
                     "error": spread, "budget": 1e-2})
    p = TorusProblem(1, K=64)
    for label, h in (("constant", Constant(((1.0,),))), ("cos3", CosMode(((1.0,),), (3,)))):
        a, b = hessian_spectral(p, h, 3), fd_hessian(p, h, 3)
        err = abs(a / b - 1)
        rows.append({"name": f"spectral_hessian/{label}", "passed": err <= 1e-6, "error": err, "budget": 1e-6})
    h = CosMode(((1.0,),), (3,))
    pred = heat_trace_leading_prediction(TorusProblem(1), h)
    devs = []
    for t in (1e-2, 3e-3, 1e-3):
        val = t ** 2.5 * heat_trace_second_variation(TorusProblem(1), h, t / 2, t / 2)
        devs.append(abs(val / pred - 1))
    ok = devs[-1] <= 0.02 and devs[0] > devs[1] > devs[2]
    rows.append({"name": "heat_trace/small_time", "passed": ok, "error": devs[-1], "budget": 0.02})
    return rows


def _suite_split(dps):
    import mpmath
    from .quadrature import (SplitInput, lemma65_split, remainder_exponent_fit, tau_expansion,
                             tau_integral_closed, uv_full_quadrature, uv_truncated_vs_full)
    rows = []
    S = mpmath.mpf("-0.3")
    n = 3
    inp = SplitInput(lambda t, T: tau_integral_closed(T, 20), n, S + mpmath.mpf(n) / 2)
    r = lemma65_split(inp, k_max=0, l_max=1, dps=20)
    u0 = mpmath.gamma(S + 1) * mpmath.gamma(-S) ** 2 / mpmath.gamma(-2 * S)
    err = abs(r["u"][0] / u0 - 1)
    rows.append({"name": "split/u0_tau", "passed": err <= 1e-8, "error": err, "budget": 1e-8})
    v0 = tau_expansion(1)[0] / S
    err = abs(r["v"][0] / v0 - 1)
    rows.append({"name": "split/v0_tau", "passed": err <= 1e-6, "error": err, "budget": 1e-6})
    fit = remainder_exponent_fit(0, 0, 0, 3, mpmath.mpf("0.7"))
    err = abs(fit["exponent"] + 2)
    rows.append({"name": "split/remainder_exponent", "passed": err <= 0.05, "error": err, "budget": 0.05})
    a = uv_full_quadrature(0, 1, 1, 3, mpmath.mpf("0"))
    b = uv_truncated_vs_full(0, 1, 1, 3, mpmath.mpf("0"))["full"]
    err = abs(a / b - 1)
    rows.append({"name": "split/full_quadrant", "passed": err <= 1e-8, "error": err, "budget": 1e-8})
    return rows


SUITES = {"identities": _suite_identities, "torus": _suite_torus, "split": _suite_split}


def cmd_verify(args, out) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    dps = DPS[args.precision]
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as ex:
        results = dict(zip(names, ex.map(lambda nm: SUITES[nm](dps), names)))
    rows = [dict(r, suite=nm) for nm in names for r in results[nm]]
    fails = sum(1 for r in rows if not r["passed"])
    obj = {"suite": args.suite, "checks": rows, "failures": fails,
           "runtime": time.perf_counter() - t0}
    text = "\n".join(f"{'PASS' if r['passed'] else 'FAIL'} [{r['suite']}] {r['name']} "
                     f"error={float(r['error']):.3e} budget={r['budget']:.1e}" for r in rows)
    text += f"\n{len(rows) - fails}/{len(rows)} passed"
    emit(obj, args.format, out, "verify", text=text)
    return fails


def cmd_torus_hessian(args, out) -> int:
    import numpy as np
    from .torus import (Constant, CosMode, TorusProblem, fd_hessian, hessian_spectral,
                        intrinsic_correction)
    g = np.array(parse_matrix(args.g)) if args.g else np.eye(args.n)
    p = TorusProblem(args.n, g, args.K, args.v_factor, args.c1)
    e = tuple(map(tuple, parse_matrix(args.e)))
    h = CosMode(e, tuple(int(x) for x in args.m.split(","))) if args.m else Constant(e)
    s = parse_scalar(args.s)
    val, terms = hessian_spectral(p, h, s, return_terms=True, check_convergence=args.check_convergence)
    obj = {"n": args.n, "K": args.K, "s": s, "hessian": val, "terms": terms,
           "intrinsic_correction": intrinsic_correction(p, h, s)}
    if args.fd:
        obj["finite_difference"] = fd_hessian(p, h, s)
    text = "\n".join(f"{k}: {v}" for k, v in _jsonable(obj).items())
    emit(obj, args.format, out, "torus_hessian", text=text)
    return 0


def cmd_heat_trace(args, out) -> int:
    from .torus import (CosMode, TorusProblem, heat_trace_leading_prediction,
                        heat_trace_second_variation)
    p = TorusProblem(args.n, v_factor=args.v_factor)
    e = tuple(map(tuple, parse_matrix(args.e)))
    h = CosMode(e, tuple(int(x) for x in args.m.split(",")))
    pred = heat_trace_leading_prediction(p, h)
    rows = []
    for t in (float(x) for x in args.t.split(",")):
        val = t ** (args.n / 2 + 2) * heat_trace_second_variation(p, h, t / 2, t / 2)
        rows.append({"t": t, "scaled_trace": val, "prediction": pred, "rel_dev": abs(val / pred - 1)})
    if args.format == "csv":
        out.write("t,scaled_trace,prediction,rel_dev\n")
        for r in rows:
            out.write(",".join(repr(float(r[k])) for k in ("t", "scaled_trace", "prediction", "rel_dev")) + "\n")
        return 0
    text = "\n".join(f"t={r['t']:.1e} scaled={r['scaled_trace']:.10f} pred={r['prediction']:.10f} "
                     f"dev={r['rel_dev']:.2e}" for r in rows)
    emit({"rows": rows}, args.format, out, "heat_trace", text=text)
    return 0


def cmd_split(args, out) -> int:
    import mpmath
    from .quadrature import SplitInput, lemma65_split, tau_integral_closed
    dps = DPS[args.precision]
    s = parse_scalar(args.s)
    Q = {"tau": lambda t, T: tau_integral_closed(T, dps),
         "exp": lambda t, T: mpmath.exp(-T)}[args.kernel]
    r = lemma65_split(SplitInput(Q, args.n, s), args.kmax, args.lmax, dps=dps)
    obj = {"n": args.n, "s": s, "u": r["u"], "v": r["v"], "u_err": r["u_err"], "v_err": r["v_err"]}
    text = "\n".join(f"{k}: {v}" for k, v in _jsonable(obj).items())
    emit(obj, args.format, out, "split", text=text)
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hesszeta", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1, help="worker thread cap")
    ap.add_argument("--precision", choices=sorted(DPS), default=os.environ.get(PRECISION_ENV, "double"))
    ap.add_argument("--manifest", help="write the run manifest here instead of stderr")
    ap.add_argument("--output", "-o", help="output file (default stdout)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theorem2", help="generate the six u_s pattern formulas")
    p.add_argument("--check", action="store_true", help="compare with the reference forms")
    p.add_argument("--format", choices=("text", "latex", "json"), default="text")
    p.set_defaults(func=cmd_theorem2)

    p = sub.add_parser("us", help="evaluate (u_s(x, xi) h)_ij")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--spec", help="operator spec JSON file")
    grp.add_argument("--builtin", choices=("laplacian", "conformal"))
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--s", required=True, help='"p/q", "re,im" or a decimal')
    p.add_argument("--xi", required=True, help="comma separated")
    p.add_argument("--h", required=True, help="rows separated by ';'")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_us)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=("identities", "torus", "split", "all"))
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("torus-hessian", help="Hessian of the corrected zeta function on a flat torus")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--g", help="metric rows separated by ';'")
    p.add_argument("--K", type=int, default=32)
    p.add_argument("--s", default="3")
    p.add_argument("--e", default="1", help="polarization rows separated by ';'")
    p.add_argument("--m", help="cosine mode, comma separated (omit for constant h)")
    p.add_argument("--c1", type=float, default=0.0)
    p.add_argument("--v-factor", action="store_true")
    p.add_argument("--fd", action="store_true", help="also compute the finite-difference value")
    p.add_argument("--check-convergence", action="store_true")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_torus_hessian)

    p = sub.add_parser("heat-trace", help="small-time heat trace second variation")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--e", default="1")
    p.add_argument("--m", default="3")
    p.add_argument("--t", default="1e-2,3e-3,1e-3")
    p.add_argument("--v-factor", action="store_true")
    p.add_argument("--format", choices=("text", "json", "csv"), default="text")
    p.set_defaults(func=cmd_heat_trace)

    p = sub.add_parser("split", help="U/V coefficient extraction for a kernel Q(t, T)")
    p.add_argument("--kernel", choices=("tau", "exp"), default="tau")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--s", default="1.2")
    p.add_argument("--kmax", type=int, default=0)
    p.add_argument("--lmax", type=int, default=2)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_split)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        build_parser().error("--threads must be positive")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))
    man = manifest(args, argv)
    validate(man, "manifest")
    if args.manifest:
        with open(args.manifest, "w") as fh:
            json.dump(man, fh, indent=2)
    else:
        sys.stderr.write(json.dumps(man) + "\n")
    out = open(args.output, "w") if args.output else sys.stdout
    try:
        return args.func(args, out)
    except (ValueError, ArithmeticError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    sys.exit(main())

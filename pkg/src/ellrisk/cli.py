"""Command-line interface: ``ellrisk fit``, ``ellrisk measure`` and ``ellrisk curve``.

Exit codes: 0 on success, 1 on usage errors, 2 on domain errors.  Domain
errors are written to stderr as ``{"error": <code>, "message": <text>}``.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .errors import EllRiskError, ParseError
from .generators import GeneratorFamily
from .measures import MEASURES, dte, dtv, risk_report
from .model import EllipticalDist, TruncationBand, fit_normal_mle

_ALIASES = {
    "normal": "normal", "gaussian": "normal",
    "student_t": "student_t", "t": "student_t", "student-t": "student_t", "studentt": "student_t",
    "logistic": "logistic",
    "laplace": "laplace",
    "pearson7": "pearson7", "pvii": "pearson7", "pearsonvii": "pearson7", "pearson_vii": "pearson7",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _family(name: str, shape) -> GeneratorFamily:
    key = _ALIASES.get(str(name).strip().lower())
    if key is None:
        raise UsageError(f"unknown family {name!r}")
    if key in ("student_t", "pearson7"):
        if shape is None:
            raise UsageError(f"family {key} needs --shape")
        return GeneratorFamily(key, float(shape))
    return GeneratorFamily(key)


def read_returns_csv(path: str) -> tuple[list[str], np.ndarray]:
    """Read a header-plus-rows CSV of returns; raises ParseError naming the bad cell."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    data = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {i} has {len(row)} cells, expected {len(header)}")
        vals = []
        for j, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"row {i}, column {j} ({header[j - 1]!r}): not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"row {i}, column {j} ({header[j - 1]!r}): non-finite value")
            vals.append(v)
        data.append(vals)
    if not data:
        raise ParseError(f"{path} has no data rows")
    return header, np.array(data)


def _parse_matrix(text: str) -> np.ndarray:
    try:
        return np.array([[float(x) for x in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise UsageError(f"cannot parse matrix {text!r}; use 'a,b;c,d'") from None


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in str(text).split(",")])
    except ValueError:
        raise UsageError(f"cannot parse vector {text!r}") from None


def load_model(args) -> EllipticalDist:
    if args.model:
        try:
            with open(args.model) as fh:
                spec = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f"cannot read model {args.model}: {exc}") from exc
        try:
            mu, sigma, fam, shape = spec["mu"], spec["sigma"], spec["family"], spec.get("shape")
        except (KeyError, TypeError) as exc:
            raise ParseError(f"model file lacks field {exc}") from exc
        return EllipticalDist(np.array(mu, float), np.array(sigma, float), _family(fam, shape))
    if args.mu is None or args.sigma is None:
        raise UsageError("give --model or both --mu and --sigma")
    mu = _parse_vector(args.mu)
    sigma = _parse_matrix(args.sigma)
    return EllipticalDist(mu, sigma, _family(args.family or "normal", args.shape))


def model_to_json(dist: EllipticalDist) -> dict:
    return {"mu": dist.mu.tolist(), "sigma": dist.sigma.tolist(), "family": dist.family.name,
            "shape": dist.family.shape}


def _band(args, n: int) -> TruncationBand:
    p = _parse_vector(args.p)
    q = _parse_vector(args.q)
    for name, v in (("p", p), ("q", q)):
        if v.size not in (1, n):
            raise UsageError(f"--{name} needs 1 or {n} values, got {v.size}")
    return TruncationBand.broadcast(p if p.size > 1 else p[0], q if q.size > 1 else q[0], n)


def _write(text: str, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def cmd_fit(args) -> None:
    if _ALIASES.get(args.family.lower()) != "normal":
        raise UsageError("only the normal family can be fitted")
    _, data = read_returns_csv(args.input)
    dist = fit_normal_mle(data)
    _write(json.dumps(model_to_json(dist), indent=2) + "\n", args.output)


def cmd_measure(args) -> None:
    dist = load_model(args)
    band = _band(args, dist.n)
    names = [m.strip().lower() for m in args.measures.split(",") if m.strip()]
    bad = [m for m in names if m not in MEASURES]
    if bad:
        raise UsageError(f"unknown measure(s) {bad}; choose from {', '.join(MEASURES)}")
    rep = risk_report(dist, band, names, accuracy=args.accuracy, seed=args.seed)
    _write(json.dumps(rep.to_dict(), indent=2) + "\n", args.output)


def _parse_sweep(text: str):
    try:
        name, rng = text.split("=")
        lo, hi, step = (float(x) for x in rng.split(":"))
    except ValueError:
        raise UsageError(f"cannot parse --sweep {text!r}; use q=start:stop:step") from None
    name = name.strip()
    if name not in ("p", "q") or step <= 0 or hi < lo:
        raise UsageError(f"bad sweep {text!r}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return name, lo + step * np.arange(count)


def _parse_fix(text: str, swept: str):
    try:
        name, val = (s.strip() for s in text.split("="))
    except ValueError:
        raise UsageError(f"cannot parse --fix {text!r}; use p=0.05 or q=1-p") from None
    if name not in ("p", "q") or name == swept:
        raise UsageError(f"--fix must name the level that is not swept, got {text!r}")
    if val.replace(" ", "") == f"1-{swept}":
        return name, lambda x: 1.0 - x
    try:
        c = float(val)
    except ValueError:
        raise UsageError(f"cannot parse --fix value {val!r}") from None
    return name, lambda x: c


def curve_rows(dist: EllipticalDist, k: int, swept: str, grid, fixed, *, accuracy=None, seed=0):
    rows = []
    for x in grid:
        p, q = (x, fixed(x)) if swept == "p" else (fixed(x), x)
        rows.append((float(x), dte(dist, p, q, k, accuracy=accuracy, seed=seed),
                     dtv(dist, p, q, k, accuracy=accuracy, seed=seed)))
    return rows


def cmd_curve(args) -> None:
    dist = load_model(args)
    k = args.component - 1
    if not (0 <= k < dist.n):
        raise UsageError(f"--component must lie in 1..{dist.n}")
    swept, grid = _parse_sweep(args.sweep)
    _, fixed = _parse_fix(args.fix, swept)
    rows = curve_rows(dist, k, swept, grid, fixed, accuracy=args.accuracy, seed=args.seed)
    lines = ["parameter,DTE,DTV"] + [f"{x:.10g},{m:.17g},{v:.17g}" for x, m, v in rows]
    _write("\n".join(lines) + "\n", args.output)


def _model_flags(sp):
    sp.add_argument("--model", help="model JSON with mu, sigma, family and optional shape")
    sp.add_argument("--mu", help="inline location, e.g. 1.2,0.7,3")
    sp.add_argument("--sigma", help="inline scale matrix, rows separated by ';'")
    sp.add_argument("--family", default=None, help="normal, student_t, logistic, laplace or pearson7")
    sp.add_argument("--shape", type=float, default=None, help="m for student_t, t for pearson7")
    sp.add_argument("--accuracy", type=float, default=None, help="target absolute integration error")
    sp.add_argument("--seed", type=int, default=0, help="seed for randomized integration (default 0)")
    sp.add_argument("--output", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ellrisk", description="Doubly truncated risk measures for elliptical models.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    fp = sub.add_parser("fit", help="fit a normal model to a returns CSV")
    fp.add_argument("--family", default="normal")
    fp.add_argument("--input", required=True)
    fp.add_argument("--output", default=None)
    fp.set_defaults(func=cmd_fit)

    mp = sub.add_parser("measure", help="compute risk measures for a band")
    _model_flags(mp)
    mp.add_argument("--p", required=True, help="lower level(s): scalar or comma list")
    mp.add_argument("--q", required=True, help="upper level(s): scalar or comma list")
    mp.add_argument("--measures", default="mdte", help=f"comma list from {','.join(MEASURES)}")
    mp.set_defaults(func=cmd_measure)

    cp = sub.add_parser("curve", help="DTE and DTV of one component over a grid of levels")
    _model_flags(cp)
    cp.add_argument("--component", type=int, default=1, help="1-based component index")
    cp.add_argument("--fix", required=True, help="fixed level, e.g. p=0.05 or q=1-p")
    cp.add_argument("--sweep", required=True, help="swept level, e.g. q=0.1:0.95:0.05")
    cp.set_defaults(func=cmd_curve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        print(f"ellrisk: error: {exc}", file=sys.stderr)
        return 1
    except EllRiskError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc)}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface and the JSON problem-file format.

A problem file looks like::

    {
      "name": "mathieu",
      "order": 2,
      "length": "2*pi",
      "parameters": {},
      "operator": [{"order": 2, "coeff": "-1"}, {"order": 0, "coeff": "cos(x)"}],
      "boundary": {"type": "dirichlet"},
      "numerics": {"tol": 1e-10, "quad_nodes": 48}
    }

An operator term ``{"order": j, "coeff": c, "inside": true}`` means
``d^ceil(j/2) (c d^floor(j/2) u)``; explicit ``"outer"``/``"inner"`` keys
override that split. Complex numbers are written ``[re, im]``. Boundary types
are the presets ``dirichlet``, ``neumann`` and ``u-and-uxx-zero``,
``separated`` (with ``left`` and ``right`` row lists), ``periodic`` and
``floquet`` (with ``mu``).

Exit status is 0 on success, 1 for user errors and 2 for numerical
failures; failures print a JSON error record on stderr.
"""

from __future__ import annotations

import csv
import io
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import click
import numpy as np

from . import certify, oracle
from .errors import EvansError, NumericalError, ProblemError, UserError
from .problem import (FloquetPeriodic, Numerics, Periodic, ProblemSpec, Separated, Term,
                      eval_length, preset, separated)

SHIPPED = ("mathieu", "fourth_order", "mkdv")


# --------------------------------------------------------------------------
# problem files


def _number(v, path: str) -> complex:
    if isinstance(v, bool):
        raise ProblemError("expected a number", path)
    if isinstance(v, (int, float)):
        return complex(v)
    if (isinstance(v, list) and len(v) == 2
            and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in v)):
        return complex(v[0], v[1])
    raise ProblemError("expected a number or [re, im]", path)


def _encode(z: complex):
    z = complex(z)
    return z.real if z.imag == 0 else [z.real, z.imag]


def _require(doc: dict, key: str, kind, path: str = ""):
    where = f"{path}.{key}" if path else key
    if key not in doc:
        raise ProblemError("missing key", where)
    v = doc[key]
    if not isinstance(v, kind) or (kind is not bool and isinstance(v, bool)):
        raise ProblemError(f"expected {getattr(kind, '__name__', kind)}", where)
    return v


def _term(doc, i: int) -> Term:
    path = f"operator[{i}]"
    if not isinstance(doc, dict):
        raise ProblemError("expected an object", path)
    coeff = _require(doc, "coeff", str, path)
    if "outer" in doc or "inner" in doc:
        outer = doc.get("outer", 0)
        inner = doc.get("inner", 0)
        for k, v in (("outer", outer), ("inner", inner)):
            if not isinstance(v, int) or isinstance(v, bool):
                raise ProblemError("expected an integer", f"{path}.{k}")
        return Term(coeff, outer, inner)
    j = _require(doc, "order", int, path)
    inside = doc.get("inside", False)
    if not isinstance(inside, bool):
        raise ProblemError("expected true or false", f"{path}.inside")
    if inside:
        return Term(coeff, (j + 1) // 2, j // 2)
    return Term(coeff, 0, j)


def _rows(rows, path: str):
    if not isinstance(rows, list) or not rows:
        raise ProblemError("expected a nonempty list of rows", path)
    out = []
    for r, row in enumerate(rows):
        if not isinstance(row, list):
            raise ProblemError("expected a list", f"{path}[{r}]")
        out.append([_number(v, f"{path}[{r}][{c}]") for c, v in enumerate(row)])
    return out


def _boundary(doc, order: int):
    if isinstance(doc, str):
        doc = {"type": doc}
    if not isinstance(doc, dict):
        raise ProblemError("expected an object", "boundary")
    kind = _require(doc, "type", str, "boundary")
    if kind == "periodic":
        return Periodic()
    if kind == "floquet":
        mu = doc.get("mu", 0.0)
        if not isinstance(mu, (int, float)) or isinstance(mu, bool):
            raise ProblemError("expected a real number", "boundary.mu")
        return FloquetPeriodic(float(mu))
    if kind == "separated":
        left = _rows(doc.get("left"), "boundary.left")
        right = _rows(doc.get("right"), "boundary.right")
        return separated(left, right, order)
    return preset(kind, order)


def problem_from_dict(doc) -> ProblemSpec:
    if not isinstance(doc, dict):
        raise ProblemError("top level must be an object")
    order = _require(doc, "order", int)
    params_doc = doc.get("parameters", {})
    if not isinstance(params_doc, dict):
        raise ProblemError("expected an object", "parameters")
    params = {k: _number(v, f"parameters.{k}") for k, v in params_doc.items()}
    length = doc.get("length")
    length_expr = None
    if isinstance(length, str):
        length_expr = length
        try:
            length = eval_length(length, params)
        except ProblemError:
            raise
        except UserError as exc:  # syntax or domain errors in the expression
            raise ProblemError(str(exc), "length") from exc
    elif not isinstance(length, (int, float)) or isinstance(length, bool):
        raise ProblemError("expected a number or an expression", "length")
    ops = _require(doc, "operator", list)
    terms = tuple(_term(t, i) for i, t in enumerate(ops))
    boundary = _boundary(doc.get("boundary", "dirichlet"), order)
    num = doc.get("numerics", {})
    if not isinstance(num, dict):
        raise ProblemError("expected an object", "numerics")
    tol = num.get("tol", Numerics.tol)
    nodes = num.get("quad_nodes", Numerics.quad_nodes)
    if not isinstance(tol, (int, float)) or not 0 < tol < 1:
        raise ProblemError("tolerance must lie in (0, 1)", "numerics.tol")
    if not isinstance(nodes, int) or isinstance(nodes, bool) or nodes < 4:
        raise ProblemError("need an integer of at least 4", "numerics.quad_nodes")
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise ProblemError("expected a string", "name")
    return ProblemSpec(order, float(length), terms, boundary, params,
                       Numerics(float(tol), nodes), length_expr, name)


def problem_to_dict(problem: ProblemSpec) -> dict:
    ops = []
    for t in problem.terms:
        j = t.order
        if t.outer == 0:
            ops.append({"order": j, "coeff": t.coeff})
        elif (t.outer, t.inner) == ((j + 1) // 2, j // 2):
            ops.append({"order": j, "coeff": t.coeff, "inside": True})
        else:
            ops.append({"outer": t.outer, "inner": t.inner, "coeff": t.coeff})
    bc = problem.boundary
    if isinstance(bc, Separated):
        if bc.preset:
            boundary = {"type": bc.preset}
        else:
            boundary = {"type": "separated",
                        "left": [[_encode(v) for v in row] for row in bc.left],
                        "right": [[_encode(v) for v in row] for row in bc.right]}
    elif isinstance(bc, FloquetPeriodic):
        boundary = {"type": "floquet", "mu": bc.mu}
    else:
        boundary = {"type": "periodic"}
    return {
        "name": problem.name,
        "order": problem.order,
        "length": problem.length_expr if problem.length_expr is not None else problem.length,
        "parameters": {k: _encode(v) for k, v in problem.parameters.items()},
        "operator": ops,
        "boundary": boundary,
        "numerics": {"tol": problem.numerics.tol, "quad_nodes": problem.numerics.quad_nodes},
    }


def load_problem(path) -> ProblemSpec:
    """Read a problem file; a bare shipped name such as ``"mathieu"`` also works."""
    p = Path(path)
    if not p.exists() and str(path) in SHIPPED:
        text = resources.files(__package__).joinpath(f"problems/{path}.json").read_text("utf-8")
    else:
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ProblemError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    return problem_from_dict(doc)


def save_problem(problem: ProblemSpec, path) -> None:
    Path(path).write_text(json.dumps(problem_to_dict(problem), indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# argument parsing


_LAMBDA = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?([+-](\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)?i?$")


def parse_lambda(text: str) -> complex:
    """``"3"``, ``"0.1+0.5i"``, ``"-2i"`` and friends."""
    s = text.strip().replace(" ", "").replace("j", "i")
    if s in ("i", "+i", "-i"):
        s = s.replace("i", "1i")
    s = re.sub(r"([+-])i$", r"\g<1>1i", s)
    if not _LAMBDA.match(s):
        raise UserError(f"cannot parse lambda {text!r}; write a+bi")
    try:
        return complex(s.replace("i", "j"))
    except ValueError as exc:
        raise UserError(f"cannot parse lambda {text!r}; write a+bi") from exc


def parse_range(text: str) -> np.ndarray:
    """``a:b:n`` gives ``n`` evenly spaced points from a to b inclusive."""
    parts = text.split(":")
    try:
        if len(parts) != 3:
            raise ValueError
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise UserError(f"range {text!r} must look like a:b:n") from None
    if n < 1:
        raise UserError("range needs n >= 1")
    return np.array([a]) if n == 1 else np.linspace(a, b, n)


def default_threads() -> int:
    raw = os.environ.get("EVANSBOUND_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UserError(f"EVANSBOUND_THREADS={raw!r} is not an integer") from None


def _pmap(fn, items, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _cplx(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _num(v: float) -> str:
    return repr(float(v))


def _emit(ctx, record: dict) -> None:
    if ctx.obj["format"] == "csv":
        _emit_rows(list(record), [[_flat(record[k]) for k in record]])
    else:
        click.echo(json.dumps(record))


def _flat(v):
    if isinstance(v, list):
        return ";".join(_num(t) for t in v)
    if isinstance(v, float):
        return _num(v)
    return str(v)


def _emit_rows(header, rows, stream=None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    click.echo(buf.getvalue(), nl=False, file=stream)


# --------------------------------------------------------------------------
# commands


@click.group()
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json",
              help="Output format of single records.")
@click.option("--threads", type=int, default=None,
              help="Worker threads for scan/extend (default: $EVANSBOUND_THREADS or 1).")
@click.pass_context
def main(ctx, fmt, threads):
    """Weighted Evans function bounds for ODE eigenproblems."""
    ctx.ensure_object(dict)
    ctx.obj["format"] = fmt
    ctx.obj["threads"] = threads


def _threads(ctx) -> int:
    t = ctx.obj["threads"]
    return default_threads() if t is None else max(1, t)


problem_arg = click.argument("problem")
lambda_opt = click.option("--lambda", "lam", required=True, help="Spectral parameter a+bi.")


@main.command("eval")
@problem_arg
@lambda_opt
@click.pass_context
def eval_cmd(ctx, problem, lam):
    """E, W and the bound |E|/W at one lambda."""
    p = load_problem(problem)
    v = certify.bound(p, parse_lambda(lam))
    _emit(ctx, {"lambda": _cplx(v.lam), "E": _cplx(v.E), "W": v.W, "bound": v.bound})


@main.command()
@problem_arg
@click.option("--re", "re_range", required=True, help="a:b:n grid of real parts.")
@click.option("--im", "im_range", default="0:0:1", show_default=True, help="a:b:n grid of imaginary parts.")
@click.pass_context
def scan(ctx, problem, re_range, im_range):
    """CSV of E, W and bound over a rectangular lambda grid (imaginary part outer)."""
    p = load_problem(problem)
    lams = [complex(a, b) for b in parse_range(im_range) for a in parse_range(re_range)]

    def one(z):
        v = certify.bound(p, z)
        E = complex(v.E)
        return [_num(z.real), _num(z.imag), _num(E.real), _num(E.imag), _num(v.W), _num(v.bound)]

    rows = _pmap(one, lams, _threads(ctx))
    _emit_rows(["re_lambda", "im_lambda", "re_E", "im_E", "W", "bound"], rows)


@main.command()
@problem_arg
@click.option("--from", "start", type=float, required=True, help="Real starting point.")
@click.option("--dir", "direction", type=click.Choice(["+", "-"]), required=True)
@click.option("--iters", type=int, default=100, show_default=True, help="Maximum iterations.")
@click.option("--stop-tol", type=float, default=1e-10, show_default=True)
@click.pass_context
def sweep(ctx, problem, start, direction, iters, stop_tol):
    """CSV trace of the monotone quasi-Newton sweep."""
    p = load_problem(problem)
    tr = certify.qnewton_sweep(p, start, 1 if direction == "+" else -1, stop_tol, iters)
    last = len(tr.iterates) - 1
    rows = [[i, _num(lam), _num(E), _num(b), tr.reason if i == last else "step"]
            for i, (lam, E, b) in enumerate(zip(tr.iterates, tr.values, tr.bounds))]
    _emit_rows(["iter", "lambda", "E", "bound", "status"], rows)


@main.command()
@problem_arg
@lambda_opt
@click.pass_context
def disk(ctx, problem, lam):
    """Certified eigenvalue-free disk around lambda."""
    p = load_problem(problem)
    d = certify.disk(p, parse_lambda(lam))
    _emit(ctx, {"center": _cplx(d.center), "radius": d.radius})


@main.command()
@problem_arg
@lambda_opt
@click.option("--mu", type=float, default=None, help="Base Floquet exponent (default: the file's).")
@click.option("--mu-grid", default=None,
              help="a:b:n Floquet exponents of the diamonds (default: 256 over one period from mu).")
@click.option("--polylines", type=click.Path(dir_okay=False, writable=True), default=None,
              help="Write diamond boundaries as CSV here.")
@click.pass_context
def extend(ctx, problem, lam, mu, mu_grid, polylines):
    """Diamonds in the (mu, lambda) plane and the certified rectangle height."""
    p = load_problem(problem)
    if not isinstance(p.boundary, FloquetPeriodic):
        raise UserError("extend needs a problem with floquet boundary conditions")
    if mu is not None:
        p = p.with_mu(mu)
    period = certify.mu_period(p)
    if mu_grid is None:
        mus = p.mu + period * np.arange(256) / 256
    else:
        mus = parse_range(mu_grid)
    z = parse_lambda(lam)
    regions = certify.extension_grid(p, z, mus, threads=_threads(ctx))
    if polylines:
        rows = []
        for k, reg in enumerate(regions):
            for mu_pt, extent in reg.polyline:
                rows.append([k, _num(reg.mu), _num(mu_pt), _num(extent)])
        with open(polylines, "w", encoding="utf-8", newline="") as fh:
            _emit_rows(["region", "mu_center", "mu", "dlambda"], rows, fh)
    record = {"lambda": _cplx(z), "regions": len(regions),
              "min_disk_radius": min(r.disk_radius for r in regions)}
    try:
        rect = certify.rectangle_from_diamonds(regions, period)
    except NumericalError as exc:
        record.update(exc.record())
        _emit(ctx, record)
        raise
    record.update({"h": rect.h, "mu_lo": rect.mu_lo, "mu_hi": rect.mu_hi})
    _emit(ctx, record)


@main.command()
@problem_arg
@click.option("--rect", nargs=4, type=float, required=True,
              metavar="RE_LO RE_HI IM_LO IM_HI")
@click.pass_context
def count(ctx, problem, rect):
    """Eigenvalues inside a rectangle, by the argument principle."""
    p = load_problem(problem)
    n = oracle.winding_count(p, oracle.Rectangle(*rect))
    _emit(ctx, {"rect": list(rect), "count": n})


@main.command()
@problem_arg
@click.option("--lambda", "lam", type=float, required=True, help="Real eigenvalue estimate.")
@click.option("--h", type=float, default=1e-4, show_default=True)
@click.pass_context
def slope(ctx, problem, lam, h):
    """Central-difference slope of E/W at a real eigenvalue."""
    p = load_problem(problem)
    _emit(ctx, {"lambda": lam, "slope": certify.slope_at_eigenvalue(p, lam, h)})


@main.command()
@problem_arg
@click.argument("out", type=click.Path(dir_okay=False))
def export(problem, out):
    """Copy a problem (shipped name or file) to OUT in canonical form."""
    save_problem(load_problem(problem), out)


def run(argv=None) -> int:
    """Entry point returning the exit status instead of exiting."""
    try:
        main.main(args=argv, prog_name="evansbound", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except click.UsageError as exc:
        click.echo(json.dumps({"error": "usage-error", "message": exc.format_message()}),
                   err=True)
        return 1
    except EvansError as exc:
        click.echo(json.dumps(exc.record()), err=True)
        return 1 if isinstance(exc, UserError) else 2
    except (FloatingPointError, np.linalg.LinAlgError, OverflowError) as exc:
        click.echo(json.dumps({"error": "numerical-error", "message": str(exc)}), err=True)
        return 2
    return 0


def entry() -> None:
    sys.exit(run())

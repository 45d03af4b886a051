"""Command-line front end for the certification pipeline.

Exit codes: 0 = certified / completed, 1 = unknown or violated spec,
2 = usage or input error, 3 = solver failure.  Every run prints a
one-line summary to stdout; ``--out`` writes machine-readable results
with the full config echoed for auditability.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from .assembly import polytope_spec
from .input_sets import Box, load_input_set
from .network import random_network, read_network, write_network
from .oracle import _ascent_space, exact_max_relu, grid_reach, sample_lower_bound
from .verifier import (
    VerifyOptions,
    bound_direction,
    certify_invariance,
    certify_robustness,
    certify_safety,
    largest_invariant_box,
    reach_polytope,
)


# ---------------------------------------------------------------------------
# argument parsing helpers

def _parse_vector(text):
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""])
    except ValueError:
        raise ValueError(f"cannot parse vector {text!r}; expected comma-separated floats")


def _parse_matrix(text):
    """Inline rows 'a,b;c,d' or a path to a JSON file holding the matrix."""
    if ";" in text or "," in text:
        rows = [_parse_vector(row) for row in text.split(";") if row.strip() != ""]
        if len({r.size for r in rows}) > 1:
            raise ValueError(f"ragged matrix {text!r}")
        return np.vstack(rows)
    with open(text, "rb") as fh:
        return np.asarray(json.loads(fh.read().decode("utf-8")), dtype=float)


def _parse_interval(text):
    """'lo:hi' with each side a scalar or comma-separated vector."""
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError(f"cannot parse bounds {text!r}; expected 'lo:hi'")
    return _parse_vector(parts[0]), _parse_vector(parts[1])


def _read_input_set(path):
    with open(path, "rb") as fh:
        return load_input_set(fh.read())


def _load_json(path):
    with open(path, "rb") as fh:
        try:
            return json.loads(fh.read().decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON: {exc}") from None


def _options_from(args):
    return VerifyOptions(
        coupling=args.coupling,
        use_local=not args.no_local,
        use_bounded=not args.no_bounded,
        lambda_nonneg=args.lambda_nonneg,
        include_cross=args.include_cross,
        prune=args.prune,
        solver_tol=args.solver_tol,
        cert_tol=args.cert_tol,
        seed=args.seed,
        max_unknown=args.max_unknown,
        threads=args.threads,
    )


def _add_common(p, with_options=True):
    p.add_argument("--out", default=None, help="result file path")
    p.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")
    if with_options:
        p.add_argument("--coupling", choices=["none", "layerwise", "full"],
                       default="layerwise")
        p.add_argument("--no-local", action="store_true",
                       help="skip presolve refinement; use global QCs only")
        p.add_argument("--no-bounded", action="store_true",
                       help="drop the post-activation range QC")
        p.add_argument("--lambda-nonneg", action="store_true",
                       help="restrict diagonal relu multipliers to >= 0")
        p.add_argument("--include-cross", action="store_true",
                       help="add cross-product box QC terms")
        p.add_argument("--prune", action="store_true",
                       help="LP-prune unrealizable polytope facet pairs")
        p.add_argument("--solver-tol", type=float, default=1e-8)
        p.add_argument("--cert-tol", type=float, default=1e-6)
        p.add_argument("--max-unknown", type=int, default=16)
        p.add_argument("--threads", type=int, default=0,
                       help="worker cap; 0 = QC_CERTIFY_THREADS or 1")
    p.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------
# result serialization

def _sanitize(obj):
    """JSON-safe copy: numpy scalars/arrays to lists, non-finite to None."""
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def _config_echo(args):
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    return _sanitize(echo)


def _write_result(path, status, bounds, residuals, args, time_s, fmt=None):
    fmt = fmt or args.fmt
    if fmt == "json":
        doc = {
            "status": status,
            "bounds": _sanitize(list(bounds)),
            "residuals": _sanitize(list(residuals)),
            "options": _config_echo(args),
            "time_s": time_s,
        }
        body = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    else:
        lines = ["i,bound,residual"]
        n = max(len(bounds), len(residuals))
        for i in range(n):
            b = repr(float(bounds[i])) if i < len(bounds) else ""
            r = repr(float(residuals[i])) if i < len(residuals) else ""
            lines.append(f"{i},{b},{r}")
        body = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(body)


def _exit_code(result):
    """Map a verification result to the documented exit codes."""
    if result.status == "certified":
        return 0
    if any("solver status failed" in note for note in result.notes):
        return 3
    return 1


# ---------------------------------------------------------------------------
# commands

def _cmd_verify(args):
    net = read_network(args.net)
    iset = _read_input_set(args.input)
    spec = _load_json(args.spec)
    if not isinstance(spec, dict) or "C" not in spec or "d" not in spec:
        raise ValueError(f"{args.spec}: safety spec needs 'C' and 'd' fields")
    C = np.atleast_2d(np.asarray(spec["C"], dtype=float))
    d = np.asarray(spec["d"], dtype=float).ravel()
    rows = polytope_spec(C, d, n_x=net.n_in)
    result = certify_safety(net, iset, rows, _options_from(args))
    if args.out:
        _write_result(args.out, result.status, result.bounds, result.residuals,
                      args, result.time_s)
    worst = max((r for r in result.residuals if np.isfinite(r)), default=float("nan"))
    print(f"{result.status}: {len(rows)} spec rows, worst residual {worst:.3e} "
          f"({result.time_s:.2f}s)")
    for note in result.notes:
        print(f"  {note}")
    return _exit_code(result)


def _cmd_bound(args):
    net = read_network(args.net)
    iset = _read_input_set(args.input)
    c = _parse_vector(args.c)
    d, result = bound_direction(net, iset, c, _options_from(args))
    if args.out:
        _write_result(args.out, result.status, result.bounds, result.residuals,
                      args, result.time_s)
    print(f"{result.status}: bound {d:.9g} ({result.time_s:.2f}s)")
    for note in result.notes:
        print(f"  {note}")
    return _exit_code(result)


def _default_directions(n_y, k):
    if n_y == 2:
        angles = 2.0 * np.pi * np.arange(k) / k
        return [np.array([np.cos(a), np.sin(a)]) for a in angles]
    dirs = []
    for i in range(n_y):
        e = np.zeros(n_y)
        e[i] = 1.0
        dirs.extend([e.copy(), -e])
    return dirs


def _reach_directions(args, n_y):
    if args.directions is None:
        return _default_directions(n_y, 8)
    try:
        k = int(args.directions)
    except ValueError:
        mat = np.atleast_2d(np.asarray(_load_json(args.directions), dtype=float))
        if mat.shape[1] != n_y:
            raise ValueError(
                f"direction rows have {mat.shape[1]} entries, output dim is {n_y}")
        return [row for row in mat]
    if n_y != 2:
        raise ValueError(
            "integer --directions needs a 2-output network; pass a file instead")
    if k < 1:
        raise ValueError("--directions must be >= 1")
    return _default_directions(2, k)


def _point_cloud(net, iset, resolution, seed):
    """Forward images for plotting: exhaustive grid when cheap, samples else."""
    if isinstance(iset, Box) and iset.dim <= 3:
        return grid_reach(net, iset, resolution=resolution)
    space = _ascent_space(iset)
    rng = np.random.default_rng(seed)
    X = space.to_x(space.sample(rng, resolution * resolution))
    from .network import forward_batch

    return forward_batch(net, X)


def _write_csv(path, header, rows):
    lines = [header]
    lines.extend(",".join(repr(float(v)) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_reach(args):
    net = read_network(args.net)
    iset = _read_input_set(args.input)
    directions = _reach_directions(args, net.n_out)
    t0 = time.perf_counter()
    h, poly = reach_polytope(net, iset, directions, _options_from(args))
    elapsed = time.perf_counter() - t0

    stem = os.path.splitext(args.out)[0]
    facet_path = stem + ".csv"
    points_path = stem + "_points.csv"
    n_y = net.n_out
    header = ",".join(f"c{i + 1}" for i in range(n_y)) + ",h"
    _write_csv(facet_path, header,
               [list(c) + [hi] for c, hi in zip(directions, h)])
    cloud = _point_cloud(net, iset, args.resolution, args.seed)
    _write_csv(points_path, ",".join(f"y{i + 1}" for i in range(n_y)), cloud)
    if args.fmt == "json":
        _write_result(stem + ".json", "completed", list(h),
                      [], args, elapsed, fmt="json")

    bad = [i for i, v in enumerate(h) if not np.isfinite(v)]
    print(f"completed: {len(directions)} facets -> {facet_path}, "
          f"points -> {points_path} ({elapsed:.2f}s)")
    if bad:
        print(f"  solver failed on rows {bad}; their h stays +inf")
        return 3
    return 0


def _cmd_robust(args):
    net = read_network(args.net)
    x_star = _parse_vector(args.x_star)
    result = certify_robustness(net, x_star, args.eps, args.label,
                                _options_from(args))
    if args.out:
        _write_result(args.out, result.status, result.bounds, result.residuals,
                      args, result.time_s)
    print(f"{result.status}: label {args.label} at eps={args.eps:g} "
          f"({result.time_s:.2f}s)")
    for note in result.notes:
        print(f"  {note}")
    return _exit_code(result)


def _cmd_invariant(args):
    if (args.eps is None) == (args.eps_search is None):
        raise ValueError("pass exactly one of --eps or --eps-search")
    controller = read_network(args.net)
    A = _parse_matrix(args.A)
    B = _parse_matrix(args.B) if (";" in args.B or os.path.exists(args.B)) \
        else _parse_vector(args.B)
    u_lo, u_hi = _parse_interval(args.u_bounds)
    opts = _options_from(args)
    t0 = time.perf_counter()
    if args.eps is not None:
        result = certify_invariance(A, B, controller, u_lo, u_hi, args.eps,
                                    opts=opts)
        bounds = list(result.bounds)
        summary = f"{result.status}: eps={args.eps:g}"
    else:
        lo, hi = _parse_vector(args.eps_search)
        eps, result = largest_invariant_box(
            A, B, controller, u_lo, u_hi, bracket=(lo, hi),
            resolution=args.resolution, opts=opts)
        bounds = [float("nan") if eps is None else eps] + list(result.bounds)
        summary = ("unknown: no eps in bracket certifies" if eps is None
                   else f"certified: largest eps = {eps:.4g}")
    elapsed = time.perf_counter() - t0
    if args.out:
        _write_result(args.out, result.status, bounds, result.residuals,
                      args, elapsed)
    print(f"{summary} ({elapsed:.2f}s)")
    for note in result.notes:
        print(f"  {note}")
    return _exit_code(result)


def _cmd_oracle(args):
    net = read_network(args.net)
    iset = _read_input_set(args.input)
    c = _parse_vector(args.c)
    t0 = time.perf_counter()
    if args.mode == "exact":
        value, cert = exact_max_relu(net, iset, c, max_unknown=args.max_unknown)
        residuals = [cert.residual]
    else:
        value = sample_lower_bound(net, iset, c, n_samples=args.n_samples,
                                   ascent_steps=args.ascent_steps, seed=args.seed)
        residuals = []
    elapsed = time.perf_counter() - t0
    if args.out:
        _write_result(args.out, "completed", [value], residuals, args, elapsed)
    print(f"completed: {args.mode} value {value:.9g} ({elapsed:.2f}s)")
    return 0


def _cmd_randnet(args):
    dims = [int(v) for v in args.dims.split(",") if v.strip() != ""]
    net = random_network(dims, seed=args.seed, activation=args.activation)
    write_network(net, args.out)
    print(f"completed: wrote {args.out} (dims {','.join(map(str, dims))}, "
          f"seed {args.seed})")
    return 0


# ---------------------------------------------------------------------------
# parser

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="qcert",
        description="Certify neural-network safety, robustness, reachability, "
                    "and invariance via quadratic constraints and SDP.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="certify a polytopic output safety spec")
    p.add_argument("--net", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--spec", required=True,
                   help="JSON file {'C': [[...]], 'd': [...]} meaning C f(x) <= d")
    _add_common(p)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bound", help="certified upper bound on c' f(x)")
    p.add_argument("--net", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--c", required=True, help="direction, comma-separated")
    _add_common(p)
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("reach", help="polytopic output over-approximation")
    p.add_argument("--net", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--directions", default=None,
                   help="count of equally spaced directions (2-output nets) "
                        "or a JSON file of direction rows; default 8 / +-e_i")
    p.add_argument("--resolution", type=int, default=50,
                   help="grid resolution per axis for the oracle point cloud")
    p.add_argument("--out", required=True, help="output stem or .csv path")
    p.add_argument("--format", dest="fmt", choices=["json", "csv"], default="json")
    p.add_argument("--coupling", choices=["none", "layerwise", "full"],
                   default="layerwise")
    p.add_argument("--no-local", action="store_true")
    p.add_argument("--no-bounded", action="store_true")
    p.add_argument("--lambda-nonneg", action="store_true")
    p.add_argument("--include-cross", action="store_true")
    p.add_argument("--prune", action="store_true")
    p.add_argument("--solver-tol", type=float, default=1e-8)
    p.add_argument("--cert-tol", type=float, default=1e-6)
    p.add_argument("--max-unknown", type=int, default=16)
    p.add_argument("--threads", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_reach)

    p = sub.add_parser("robust", help="certify classifier robustness in an "
                                      "infinity-norm ball")
    p.add_argument("--net", required=True)
    p.add_argument("--x-star", required=True, help="center point, comma-separated")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--label", type=int, required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_robust)

    p = sub.add_parser("invariant", help="certify forward invariance of a box "
                                         "under x+ = Ax + Bu, u = clamp(net(x))")
    p.add_argument("--net", required=True, help="controller network file")
    p.add_argument("--A", required=True, help="rows 'a,b;c,d' or JSON file")
    p.add_argument("--B", required=True, help="vector/matrix inline or JSON file")
    p.add_argument("--u-bounds", required=True,
                   help="'lo:hi', scalars or comma vectors; use the = form "
                        "for negative values, e.g. --u-bounds=-1:1")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--eps-search", default=None,
                   help="bracket 'lo,hi' for bisection")
    p.add_argument("--resolution", type=float, default=1e-2)
    _add_common(p)
    p.set_defaults(func=_cmd_invariant)

    p = sub.add_parser("oracle", help="ground-truth maximization of c' f(x)")
    p.add_argument("--net", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--c", required=True)
    p.add_argument("--mode", choices=["exact", "sample"], required=True)
    p.add_argument("--n-samples", type=int, default=1000)
    p.add_argument("--ascent-steps", type=int, default=20)
    p.add_argument("--max-unknown", type=int, default=16)
    _add_common(p, with_options=False)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("randnet", help="generate a Gaussian test network")
    p.add_argument("--dims", required=True, help="layer sizes, e.g. 2,100,2")
    p.add_argument("--activation", default="relu")
    p.add_argument("--out", default="net.json")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_randnet)

    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface.

Exit status: 0 success, 1 a theorem or consistency check failed, 2 usage or
validation error (including exceeded caps).
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

from .derivations import ProlongationState, classify_layer, prolong, render_map
from .graded_algebra import (
    DEFAULT_JACOBI_EXHAUSTIVE_DIM, DEFAULT_MAX_ALGEBRA_DIM, build_negative_part,
    homogeneity_violations, jacobi_violations, lower_central_series, transitivity_check,
)
from .second_kind import NotApplicable, confirm_theorem, predicted_ell
from .vfield import (
    DEFAULT_MAX_LAYER_WEIGHT, CapExceeded, FieldSyntaxError, Signature, bracket,
    enumerate_layer, format_term, parse_field,
)

SCHEMA_VERSION = "1"
DEFAULT_MAX_DEPTH = 8

ENV_CAPS = {
    "max_layer_weight": ("TANAKA_MAX_LAYER_WEIGHT", DEFAULT_MAX_LAYER_WEIGHT),
    "max_dim": ("TANAKA_MAX_DIM", DEFAULT_MAX_ALGEBRA_DIM),
    "max_depth": ("TANAKA_MAX_DEPTH", DEFAULT_MAX_DEPTH),
}


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Caps:
    max_layer_weight: int = DEFAULT_MAX_LAYER_WEIGHT
    max_dim: int = DEFAULT_MAX_ALGEBRA_DIM
    max_depth: int = DEFAULT_MAX_DEPTH


@dataclass(frozen=True)
class RunConfig:
    signature: tuple[int, ...]
    max_prolongation_weight: int | None = None
    output_format: str = "text"
    output_path: str | None = None
    caps: Caps = field(default_factory=Caps)

    def to_report(self) -> dict:
        d = asdict(self)
        d["signature"] = list(self.signature)
        d.pop("output_path")
        return d


@dataclass(frozen=True)
class SweepConfig:
    max_dim: int
    max_weight: int
    depth: int | None = None
    output_path: str | None = None

    def signatures(self) -> list[tuple[int, ...]]:
        out = []
        for n in range(1, self.max_dim + 1):
            out.extend(itertools.combinations_with_replacement(range(1, self.max_weight + 1), n))
        return sorted(set(out), key=lambda s: (len(s), s))


def resolve_caps(args) -> Caps:
    values = {}
    for name, (env, default) in ENV_CAPS.items():
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
        elif os.environ.get(env):
            try:
                values[name] = int(os.environ[env])
            except ValueError:
                raise UsageError(f"{env} must be an integer, got {os.environ[env]!r}")
        else:
            values[name] = default
    return Caps(**values)


def parse_signature(text: str) -> Signature:
    try:
        weights = [int(x) for x in text.replace(" ", "").split(",") if x != ""]
    except ValueError:
        raise UsageError(f"--sig expects comma-separated positive integers, got {text!r}")
    if not weights:
        raise UsageError("--sig must list at least one weight")
    bad = [w for w in weights if w < 1]
    if bad:
        raise UsageError(f"signature weights must be positive, got {bad[0]}")
    return Signature.from_input(weights)


def default_depth(sig: Signature) -> int:
    if sig.n >= 2:
        ell = predicted_ell(sig).ell
        if ell >= 0:
            return ell + 1
    return 3


def write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    atomic_write(path, text)


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _note_permutation(sig: Signature) -> None:
    if sig.permutation != tuple(range(sig.n)):
        order = ",".join(str(i + 1) for i in sig.permutation)
        print(f"note: signature sorted to {sig}; coordinate k was input position ({order})[k]",
              file=sys.stderr)


def _config(args, sig: Signature, caps: Caps, depth: int | None = None) -> RunConfig:
    return RunConfig(sig.weights, depth, "json" if args.json else "text", args.out, caps)


def _depth(args, sig: Signature, caps: Caps) -> int:
    depth = args.max if args.max is not None else default_depth(sig)
    if depth < 0:
        raise UsageError("--max must be >= 0")
    if depth > caps.max_depth:
        raise CapExceeded("max_depth", caps.max_depth, depth)
    return depth


def _state(sig: Signature, caps: Caps, depth: int) -> ProlongationState:
    return prolong(sig, depth, caps.max_layer_weight, caps.max_dim)


# -- commands -------------------------------------------------------------------

def cmd_basis(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    k = args.weight
    if k is None:
        raise UsageError("basis needs --weight")
    if k < -sig.top_weight:
        raise UsageError(f"weight {k} is below -r_n = {-sig.top_weight}")
    layer = enumerate_layer(sig, k, caps.max_layer_weight)
    _note_permutation(sig)
    if args.json:
        out = dump_json({
            "schema_version": SCHEMA_VERSION,
            "config": _config(args, sig, caps).to_report(),
            "signature": list(sig.weights),
            "weight": k,
            "dim": len(layer),
            "basis": [{"field": format_term(m, 1), "weight": m.weight(sig)} for m in layer],
        })
    else:
        out = " ; ".join(format_term(m, 1) for m in layer) + "\n"
    write_output(out, args.out)
    return 0


def cmd_bracket(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    x = parse_field(args.x, sig.n)
    y = parse_field(args.y, sig.n)
    z = bracket(x, y)
    if args.json:
        out = dump_json({"schema_version": SCHEMA_VERSION, "signature": list(sig.weights),
                         "x": str(x), "y": str(y), "bracket": str(z),
                         "weights": sorted(z.weights(sig))})
    else:
        out = f"{z}\n"
    write_output(out, args.out)
    return 0


def cmd_derive(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    k = args.weight
    if k is None or k < 0:
        raise UsageError("derive needs --weight k >= 0")
    if k > caps.max_depth:
        raise CapExceeded("max_depth", caps.max_depth, k)
    state = _state(sig, caps, k)
    layer = state.layers[k]
    _note_permutation(sig)
    if args.json:
        out = dump_json({
            "schema_version": SCHEMA_VERSION,
            "config": _config(args, sig, caps, k).to_report(),
            "signature": list(sig.weights),
            "k": k,
            "dim_gT": layer.dim,
            "basis": [d.to_report() for d in layer.maps],
            "rendered": [render_map(d, state) for d in layer.maps],
        })
    else:
        lines = [f"g_{k}^T for signature ({sig}): dim {layer.dim}"]
        for i, d in enumerate(layer.maps):
            lines.append(f"[{i}] " + "; ".join(render_map(d, state)))
        out = "\n".join(lines) + "\n"
    write_output(out, args.out)
    return 0


def cmd_classify(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    k = args.weight
    if k is None or k < 0:
        raise UsageError("classify needs --weight k >= 0")
    if k > caps.max_depth:
        raise CapExceeded("max_depth", caps.max_depth, k)
    state = _state(sig, caps, k)
    cls = classify_layer(state, k)
    _note_permutation(sig)
    reps = [render_map(d, state) for d in cls.representatives]
    if args.json:
        out = dump_json({
            "schema_version": SCHEMA_VERSION,
            "config": _config(args, sig, caps, k).to_report(),
            "signature": list(sig.weights),
            "k": k, "dim_gT": cls.dim, "first_kind": cls.first_kind_dim,
            "second_kind": cls.second_kind_dim, "representatives": reps,
        })
    else:
        lines = [f"k={k}: dim g_k^T = {cls.dim}, first kind {cls.first_kind_dim}, "
                 f"second kind {cls.second_kind_dim}"]
        for i, r in enumerate(reps):
            lines.append(f"  second kind [{i}]: " + "; ".join(r))
        out = "\n".join(lines) + "\n"
    write_output(out, args.out)
    return 0


def cmd_predict(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    try:
        pred = predicted_ell(sig)
    except NotApplicable as exc:
        raise UsageError(str(exc))
    if args.json:
        out = dump_json({"schema_version": SCHEMA_VERSION, "signature": list(sig.weights),
                         "ell": pred.ell, "multiplicity": pred.multiplicity,
                         "has_wrong_weight": pred.has_wrong_weight,
                         "predicted_second_kind_dim": pred.predicted_second_kind_dim})
    elif pred.has_wrong_weight:
        out = (f"first wrong weight l={pred.ell}, multiplicity {pred.multiplicity}, "
               f"predicted second-kind dimension {pred.predicted_second_kind_dim}\n")
    else:
        out = f"no wrong weight (l={pred.ell})\n"
    write_output(out, args.out)
    return 0


def prolong_report(sig: Signature, caps: Caps, depth: int, config: RunConfig) -> tuple[dict, str]:
    state = _state(sig, caps, depth)
    rep = confirm_theorem(sig, state)
    obj = {"schema_version": SCHEMA_VERSION, "config": config.to_report()}
    body = rep.to_report()
    obj.update({k: body[k] for k in ("signature", "ell", "multiplicity", "layers", "theorem", "witnesses")})
    obj["failures"] = body["failures"]
    lines = [f"signature ({sig}), prolongation through weight {depth}"]
    if rep.ell is None:
        lines.append("n = 1: no first wrong weight")
    elif rep.ell < 0:
        lines.append(f"no wrong weight (l={rep.ell})")
    else:
        lines.append(f"first wrong weight l={rep.ell}, multiplicity {rep.multiplicity}")
    lines.append(f"{'k':>3} {'dim g_k':>8} {'dim g_k^T':>10} {'second':>7} {'predicted':>9}")
    for row in rep.rows:
        pr = "-" if row.predicted is None else str(row.predicted)
        lines.append(f"{row.k:>3} {row.dim_g:>8} {row.dim_gT:>10} {row.second_kind:>7} {pr:>9}")
    lines.append(f"theorem check: {rep.status}")
    lines.extend(f"  {f}" for f in rep.failures)
    for w in rep.witnesses:
        lines.append("  witness: " + "; ".join(w))
    return obj, "\n".join(lines) + "\n"


def cmd_prolong(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    depth = _depth(args, sig, caps)
    config = _config(args, sig, caps, depth)
    obj, text = prolong_report(sig, caps, depth, config)
    _note_permutation(sig)
    write_output(dump_json(obj) if args.json else text, args.out)
    return 1 if obj["theorem"] == "FAIL" else 0


def cmd_check(args, caps: Caps) -> int:
    sig = parse_signature(args.sig)
    alg = build_negative_part(sig, caps.max_dim)
    jac = jacobi_violations(alg, DEFAULT_JACOBI_EXHAUSTIVE_DIM)
    hom = homogeneity_violations(alg)
    _, height = lower_central_series(alg)
    trans = transitivity_check(alg)
    results = {
        "jacobi": not jac,
        "jacobi_exhaustive": alg.dim <= DEFAULT_JACOBI_EXHAUSTIVE_DIM,
        "homogeneity": not hom,
        "transitive": trans,
        "height": height,
        "height_bounded": height <= sig.top_weight,
    }
    ok = results["jacobi"] and results["homogeneity"] and trans and results["height_bounded"]
    if args.json:
        out = dump_json({"schema_version": SCHEMA_VERSION, "signature": list(sig.weights),
                         "dim": alg.dim, "layer_dims": {str(k): alg.layer_dim(k) for k in sorted(alg.layers)},
                         "checks": results, "status": "PASS" if ok else "FAIL"})
    else:
        lines = [f"m for signature ({sig}): dim {alg.dim}, height {height}"]
        lines += [f"  {name}: {val}" for name, val in results.items()]
        lines.append("PASS" if ok else "FAIL")
        out = "\n".join(lines) + "\n"
    write_output(out, args.out)
    return 0 if ok else 1


def sweep_one(weights: tuple[int, ...], depth: int | None, caps: Caps) -> dict:
    sig = Signature(weights)
    record = {"signature": list(weights)}
    try:
        d = depth if depth is not None else default_depth(sig)
        state = _state(sig, caps, d)
        rep = confirm_theorem(sig, state)
        pred = predicted_ell(sig) if sig.n >= 2 else None
        observed = rep.observed_first_wrong_weight
        ell = rep.ell
        if pred is not None and ell >= 0 and ell <= d:
            computed = rep.rows[ell].second_kind
            predicted = pred.predicted_second_kind_dim
            agree = observed == ell and computed == predicted
        else:
            computed = predicted = None
            agree = observed is None if (ell is None or ell < 0) else (observed is None or observed > d)
        agree = agree and rep.status != "FAIL"
        record.update({"depth": d, "ell": ell, "observed_first_wrong_weight": observed,
                       "predicted_dim": predicted, "computed_dim": computed,
                       "theorem": rep.status, "agree": agree, "error": None})
    except Exception as exc:  # recorded per signature, the sweep goes on
        record.update({"depth": depth, "ell": None, "observed_first_wrong_weight": None,
                       "predicted_dim": None, "computed_dim": None, "theorem": "FAIL",
                       "agree": False, "error": f"{type(exc).__name__}: {exc}"})
    return record


def run_sweep(config: SweepConfig, caps: Caps, jobs: int = 1) -> dict:
    sigs = config.signatures()
    if jobs > 1 and len(sigs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(sweep_one, s, config.depth, caps) for s in sigs]
            records = [f.result() for f in futures]
    else:
        records = [sweep_one(s, config.depth, caps) for s in sigs]
    agreeing = sum(1 for r in records if r["agree"])
    return {
        "schema_version": SCHEMA_VERSION,
        "config": {"max_dim": config.max_dim, "max_weight": config.max_weight,
                   "depth": config.depth, "caps": asdict(caps)},
        "records": records,
        "summary": {"total": len(records), "agreeing": agreeing},
    }


def cmd_sweep(args, caps: Caps) -> int:
    if args.max_n < 0 or args.max_r < 0:
        raise UsageError("sweep bounds must be non-negative")
    if args.depth is not None and args.depth > caps.max_depth:
        raise CapExceeded("max_depth", caps.max_depth, args.depth)
    config = SweepConfig(args.max_n, args.max_r, args.depth, args.out)
    report = run_sweep(config, caps, args.jobs)
    s = report["summary"]
    if args.out:
        atomic_write(args.out, dump_json(report))
    elif args.json:
        sys.stdout.write(dump_json(report))
    if not args.json or args.out:
        for r in report["records"]:
            if not r["agree"]:
                print(f"DISAGREE {r['signature']}: {r}", file=sys.stderr)
        print(f"sweep: {s['agreeing']}/{s['total']} signatures agree with the prediction")
    return 0 if s["agreeing"] == s["total"] else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="emit JSON")
    common.add_argument("--out", metavar="PATH", help="write output to PATH (atomically)")
    common.add_argument("--max-layer-weight", dest="max_layer_weight", type=int,
                        help="largest weight k for which g_k(h) may be enumerated")
    common.add_argument("--max-dim", dest="max_dim", type=int, help="largest allowed dim m")
    common.add_argument("--max-depth", dest="max_depth", type=int, help="largest prolongation depth")

    with_sig = argparse.ArgumentParser(add_help=False)
    with_sig.add_argument("--sig", required=True, help="weights, e.g. 1,2,4 (sorted automatically)")

    parser = argparse.ArgumentParser(
        prog="tanaka",
        description="Graded derivations of nilpotent algebras of polynomial vector fields")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("basis", parents=[common, with_sig], help="list a layer g_k(h)")
    p.add_argument("--weight", type=int, required=True)
    p.set_defaults(func=cmd_basis)

    p = sub.add_parser("bracket", parents=[common, with_sig], help="bracket of two fields")
    p.add_argument("x", help='field, e.g. "x1*d2"')
    p.add_argument("y")
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("derive", parents=[common, with_sig], help="solve one prolongation layer")
    p.add_argument("--weight", type=int, required=True)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("prolong", parents=[common, with_sig], help="dimension table and theorem check")
    p.add_argument("--max", type=int, help="highest weight (default l+1, or 3 when l < 0)")
    p.set_defaults(func=cmd_prolong)

    p = sub.add_parser("classify", parents=[common, with_sig], help="first/second kind split of a layer")
    p.add_argument("--weight", type=int, required=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("predict", parents=[common, with_sig], help="first wrong weight from the signature")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("check", parents=[common, with_sig], help="Jacobi/homogeneity/transitivity suite")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", parents=[common], help="census over all small signatures")
    p.add_argument("--max-n", dest="max_n", type=int, required=True)
    p.add_argument("--max-r", dest="max_r", type=int, required=True)
    p.add_argument("--depth", type=int, help="fixed depth (default per signature: l+1, or 3)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        caps = resolve_caps(args)
        return args.func(args, caps)
    except (UsageError, FieldSyntaxError, CapExceeded, IndexError, ValueError) as exc:
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

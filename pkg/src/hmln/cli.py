"""Command-line entry point: ground, learn, verify, gen-data, export-milp, report.

Exit codes: 0 success, 1 verification failed, 2 input error, 3 resource limit
or learning divergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bench import HomophilyConfig, IrtConfig, gen_homophily, gen_irt
from .data import DataError, load_embeddings, parse_evidence
from .dsl import parse_spec, render_formula
from .hypercube import HypercubeError, WeightTable
from .io import atomic_write
from .learning import LearnConfig, LearningError, learn_weights
from .logic import ConfigError, EvaluationError, Kind
from .milp.encode import EncodeConfig, MapContext
from .milp.lpformat import export_lp
from .milp.problem import ProblemError
from .model import UNKNOWN, ResourceError, build_model
from .verification import VerifyConfig, verify

log = logging.getLogger("hmln")

EXIT_OK, EXIT_FAILED, EXIT_INPUT, EXIT_RESOURCE = 0, 1, 2, 3


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None


def _spec(args):
    return parse_spec(_read(args.spec))


def _evidence(args, spec):
    return parse_evidence(_read(args.evidence), spec) if args.evidence else None


def _embeddings(path, metric):
    if path is None:
        return None
    if not Path(path).exists():
        raise DataError(f"cannot read {path}: no such file")
    return load_embeddings(path, metric)


def _table(args, spec) -> WeightTable | None:
    if not getattr(args, "weights", None):
        return None
    table = WeightTable.from_json(_read(args.weights))
    table.validate(spec)
    return table


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# --- commands -----------------------------------------------------------------------------


def cmd_ground(args) -> int:
    spec = _spec(args)
    evidence = _evidence(args, spec)
    model = build_model(spec, evidence, _embeddings(args.embeddings, args.metric), _table(args, spec))
    props = []
    for p, comp in enumerate(model.compiled):
        entry = {"id": comp.prop.id, "formula": render_formula(comp.prop.formula), "groundings": comp.size}
        if comp.symbolic is not None:
            kv = comp.sym_values(model.evidence)
            entry["decidedByEvidence"] = int((kv != UNKNOWN).sum())
        props.append(entry)
    stats = {
        "domains": {d.name: len(d) for d in spec.domains},
        "atoms": {
            "symbolic": model.index.n_sym,
            "subsymbolic": model.index.n_sub,
            "evidence": int(model.evidence_mask.sum()),
            "query": model.n_query,
            "implicitFalse": evidence.implicit_false(spec) if evidence is not None else 0,
            "subsymbolicObserved": int((~np.isnan(model.subsymbolic)).sum()),
        },
        "weights": model.n_weights,
        "properties": props,
    }
    _emit(args.out, _json(stats))
    return EXIT_OK


def cmd_learn(args) -> int:
    spec = _spec(args)
    evidence = _evidence(args, spec)
    store = _embeddings(args.embeddings, args.metric)
    if store is None:
        raise ConfigError("learn needs --embeddings (the observed sub-symbolic values)")
    base = build_model(spec, evidence, store)
    sym = base.evidence.copy()
    if args.truth:
        truth = parse_evidence(_read(args.truth), spec)
        for a, v in truth.literals.items():
            i = base.index.id(a)
            if base.evidence[i] != UNKNOWN and base.evidence[i] != v:
                raise DataError(f"truth contradicts evidence on {a}")
            sym[i] = v
    if (sym == UNKNOWN).any():
        missing = base.index.atom(Kind.SYMBOLIC, int(np.flatnonzero(sym == UNKNOWN)[0]))
        raise DataError(f"no observed value for query atom {missing} (add it to --truth)")
    config = LearnConfig(learning_rate=args.lr, epochs=args.epochs, alpha=args.alpha)
    history = []
    table = learn_weights(spec, (sym, base.subsymbolic), config, evidence, history)
    curve = io.StringIO()
    w = csv.writer(curve, lineterminator="\n")
    w.writerow(["epoch", "gradient_norm", "map_observed", "map_evidence"])
    for r in history:
        w.writerow([r.epoch, repr(r.gradient_norm), repr(r.map_objectives[0]), repr(r.map_objectives[1])])
    out = Path(args.out)
    atomic_write(out, table.to_json())
    atomic_write(Path(args.curve) if args.curve else out.with_name(out.stem + "_curve.csv"), curve.getvalue())
    return EXIT_OK


def _plot_rows(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["property", "cube", "grounding", "model", "upper", "lower"])
    for r in report.properties:
        for s in r.samples:
            w.writerow([r.property, s["cubeId"], s["grounding"], "spec", repr(s["uSpec"]), repr(s["lSpec"])])
            w.writerow([r.property, s["cubeId"], s["grounding"], "test", repr(s["uTest"]), repr(s["lTest"])])
    return buf.getvalue()


def cmd_verify(args) -> int:
    spec = _spec(args)
    evidence = _evidence(args, spec)
    spec_store = _embeddings(args.embeddings, args.metric)
    test_store = _embeddings(args.test_embeddings, args.metric)
    if spec_store is None or test_store is None:
        raise ConfigError("verify needs --embeddings and --test-embeddings")
    table = _table(args, spec) or WeightTable.single(spec)
    model = build_model(spec, evidence, spec_store, table)
    config = VerifyConfig(gamma=args.gamma, delta_u=args.delta_u, delta_l=args.delta_l, seed=args.seed)
    report = verify(model, spec_store, test_store, table.cubes, config, timing=args.timing)
    atomic_write(args.out, report.to_json())
    if args.plot_data:
        atomic_write(args.plot_data, _plot_rows(report))
    for r in report.properties:
        log.info("property %d: tU=%.4g pU=%.4g tL=%.4g pL=%.4g %s", r.property, r.t_u, r.p_u, r.t_l, r.p_l,
                 "pass" if r.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_FAILED


def _condition(text):
    try:
        p, g, v = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError("--condition expects PROPERTY_INDEX,GROUNDING_INDEX,VALUE") from None
    if v not in (0, 1):
        raise ConfigError("--condition value must be 0 or 1")
    return p, g, v


def _bounds(text):
    if text is None:
        return None
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise ConfigError("--sub-bounds expects LO,HI") from None
    if not lo <= hi:
        raise ConfigError("--sub-bounds needs LO <= HI")
    return lo, hi


def cmd_export_milp(args) -> int:
    spec = _spec(args)
    evidence = _evidence(args, spec)
    store = _embeddings(args.embeddings, args.metric)
    model = build_model(spec, evidence, store, _table(args, spec))
    config = EncodeConfig(sub_bounds=_bounds(args.sub_bounds))
    sub = None if args.free_sub else model.subsymbolic
    ctx = MapContext(model, sub=sub, config=config)
    cond = None
    if args.condition:
        from .milp.encode import simplify

        p, g, value = _condition(args.condition)
        if not 0 <= p < len(model.compiled) or not 0 <= g < model.compiled[p].size:
            raise ConfigError("--condition refers to a grounding that does not exist")
        comp = model.compiled[p]
        if comp.symbolic is None:
            raise ConfigError(f"property {p} has no symbolic part")
        tree = simplify(comp.symbolic, comp.atom_ids, g, ctx.sym)
        if isinstance(tree, bool):
            if tree != bool(value):
                raise ConfigError("the condition contradicts the evidence")
        else:
            cond = (tree, value)
    problem, _ = ctx.encode(None, cond)
    problem.objective_constant += ctx.constant
    atomic_write(args.out, export_lp(problem))
    return EXIT_OK


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.4g}"


def render_report(data: dict, color: bool = False) -> str:
    """Plain-text table; failed properties are marked (red when ``color``)."""
    head = ["property", "samples", "tU", "pU", "tL", "pL", "result"]
    rows = []
    for r in data["properties"]:
        rows.append([str(r["property"]), str(len(r["samples"])), _fmt(r["t_u"]), _fmt(r["p_u"]),
                     _fmt(r["t_l"]), _fmt(r["p_l"]), "pass" if r["pass"] else "FAIL"])
    widths = [max(len(h), *(len(row[k]) for row in rows)) if rows else len(h) for k, h in enumerate(head)]
    lines = ["  ".join(h.ljust(n) for h, n in zip(head, widths))]
    lines.append("  ".join("-" * n for n in widths))
    for row in rows:
        line = "  ".join(c.ljust(n) for c, n in zip(row, widths))
        if row[-1] == "FAIL":
            line = f"\x1b[31m{line}\x1b[0m" if color else line + "  <-- failed"
        lines.append(line.rstrip())
    gamma = data.get("config", {}).get("gamma")
    lines.append("")
    lines.append(f"gamma = {gamma}; overall: {'pass' if data['pass'] else 'FAIL'}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    try:
        data = json.loads(_read(args.report))
        text = render_report(data, color=args.out is None and sys.stdout.isatty())
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise DataError(f"{args.report} is not a verification report: {e}") from None
    _emit(args.out, text)
    return EXIT_OK


def cmd_gen_data(args) -> int:
    if args.kind == "homophily":
        cfg = HomophilyConfig(nodes=args.nodes, classes=args.classes, p_in=args.p_in, p_out=args.p_out,
                              embed_dim=args.embed_dim, noise_sigma=args.noise_sigma, labeled=args.labeled,
                              seed=args.seed)
        gen_homophily(cfg).write(args.out)
    else:
        over = {"seed": args.seed, "eta": args.eta}
        if args.students is not None:
            over["students"] = args.students
        gen_irt(IrtConfig.from_name(args.name, **over)).write(args.out)
    return EXIT_OK


def _emit(out, text: str) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


# --- parser -----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hmln", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def model_args(p, embeddings=True):
        p.add_argument("--spec", required=True)
        p.add_argument("--evidence")
        if embeddings:
            p.add_argument("--embeddings")
        p.add_argument("--metric", default="euclidean", choices=["euclidean", "cosine"])

    p = sub.add_parser("ground", help="grounding statistics")
    model_args(p)
    p.add_argument("--weights")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_ground)

    p = sub.add_parser("learn", help="learn hypercube weights")
    model_args(p)
    p.add_argument("--truth", help="observed values of the query atoms (evidence format)")
    p.add_argument("--alpha", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("verify", help="verify test embeddings against the specification")
    model_args(p)
    p.add_argument("--test-embeddings", required=True)
    p.add_argument("--weights")
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--delta-u", type=float)
    p.add_argument("--delta-l", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-data")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("export-milp", help="write the MAP problem in LP format")
    model_args(p)
    p.add_argument("--weights")
    p.add_argument("--free-sub", action="store_true", help="leave sub-symbolic atoms free")
    p.add_argument("--sub-bounds")
    p.add_argument("--condition", help="PROPERTY_INDEX,GROUNDING_INDEX,VALUE")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_export_milp)

    p = sub.add_parser("report", help="summary table of a verification report")
    p.add_argument("--report", required=True)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("gen-data", help="synthetic datasets")
    p.add_argument("kind", choices=["homophily", "irt"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=60)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--embed-dim", type=int, default=8)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.add_argument("--labeled", type=float, default=0.8)
    p.add_argument("--name", default="Student-50-1-2")
    p.add_argument("--students", type=int)
    p.add_argument("--eta", type=float, default=0.1)
    p.set_defaults(fn=cmd_gen_data)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.fn(args)
    except (ResourceError, LearningError) as e:
        print(f"hmln: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ConfigError, DataError, HypercubeError, EvaluationError, ProblemError, ValueError, OSError) as e:
        print(f"hmln: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: ``zeroone {index,sweep,exact,mixing,sample}``.

Configs are TOML files, or a CSV written by this tool: its ``# config:``
header line holds the fully resolved config as JSON, so rerunning on the
CSV reproduces it byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .configuration import Configuration, LocalConfiguration, count_matches, dump_configuration
from .evaluator import (
    InfeasibleError,
    estimate_mixing,
    estimate_probability,
    exact_mixing,
    exact_probability,
)
from .samplers import (
    EXACT_MAX_SITES,
    BernoulliModel,
    EnumerationBoundError,
    IsingParams,
    PotentialSchedule,
    ShiftFieldParams,
    replica_seed,
    sample_batch,
    schedule_eval,
)
from .sentence import (
    INFINITY,
    EnumerationCapError,
    SentenceSemanticError,
    SentenceSyntaxError,
    format_sentence,
    infer_dimension,
    leaves,
    min_plus_counts,
    parse_sentence,
    sentence_hash,
)
from .torus import TorusParams, ball_template

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3
LOW_BAND, HIGH_BAND = 0.1, 0.9
DEFAULT_EXACT_SITES = 16
DEFAULT_SWEEP_GRID = {2: [16, 32, 64, 128]}


class ConfigError(ValueError):
    pass


# config handling -------------------------------------------------------------

def load_config(path) -> dict:
    text = Path(path).read_text()
    for line in text.splitlines():
        if line.startswith("# config: "):
            return json.loads(line[len("# config: "):])
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _norm_value(p):
    return "inf" if p in ("inf", math.inf) else int(p)


def _torus(cfg: dict, default_n=None) -> dict:
    torus = cfg.get("torus")
    if isinstance(torus, dict) and "n" not in torus and default_n is not None:
        torus = dict(torus, n=default_n.get(torus.get("d")))
    if not isinstance(torus, dict) or "d" not in torus or torus.get("n") is None:
        raise ConfigError("config needs a [torus] section with d and n")
    ns = torus["n"] if isinstance(torus["n"], list) else [torus["n"]]
    ns = [int(n) for n in ns]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("torus n values must be strictly increasing")
    out = {"d": int(torus["d"]), "n": ns, "p": _norm_value(torus.get("p", 1)), "rho": int(torus.get("rho", 1))}
    try:
        for n in ns:
            TorusParams(out["d"], n, out["p"], out["rho"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return out


def _params(torus: dict, n: int) -> TorusParams:
    return TorusParams(torus["d"], n, torus["p"], torus["rho"])


def _model(cfg: dict) -> dict:
    model = cfg.get("model")
    if not isinstance(model, dict) or "kind" not in model:
        raise ConfigError("config needs a [model] section with a kind")
    kind = model["kind"]
    if kind == "bernoulli":
        return {"kind": kind, "p": float(model["p"])}
    if kind == "ising":
        return {"kind": kind, "a": float(model["a"]), "b": float(model.get("b", 0.0))}
    if kind == "shift":
        kernel = [[int(c) for c in row[:-1]] + [float(row[-1])] for row in model["kernel"]]
        return {
            "kind": kind,
            "kernel": kernel,
            "threshold": float(model.get("threshold", 0.0)),
            "innovation": model.get("innovation", "gaussian"),
        }
    raise ConfigError(f"unknown model kind {kind!r}")


def build_model(spec: dict):
    try:
        if spec["kind"] == "bernoulli":
            return BernoulliModel(spec["p"])
        if spec["kind"] == "ising":
            return IsingParams(spec["a"], spec["b"])
        kernel = {tuple(row[:-1]): row[-1] for row in spec["kernel"]}
        return ShiftFieldParams(kernel, spec["threshold"], spec["innovation"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def describe_model(model) -> str:
    if isinstance(model, BernoulliModel):
        return f"bernoulli(p={model.p!r})"
    if isinstance(model, IsingParams):
        return f"ising(a={model.a!r},b={model.b!r})"
    weights = ",".join(f"{k}:{v!r}" for k, v in sorted(model.kernel.items()))
    return f"shift(kernel={{{weights}}},threshold={model.threshold!r},innovation={model.innovation})"


def _sentence(text: str, params: TorusParams):
    try:
        return parse_sentence(text, params)
    except (SentenceSyntaxError, SentenceSemanticError) as exc:
        raise ConfigError(f"sentence: {exc}") from exc
    except ValueError as exc:  # radius too large for this torus
        raise ConfigError(f"sentence: {exc}") from exc


def _common(cfg: dict, args) -> dict:
    out = {
        "experiment": str(cfg.get("experiment", "experiment")),
        "replicas": int(args.replicas if args.replicas is not None else cfg.get("replicas", 1000)),
        "seed": int(args.seed if args.seed is not None else cfg.get("seed", 0)),
        "method": str(cfg.get("method", "auto")),
    }
    if out["replicas"] < 1:
        raise ConfigError("replicas must be >= 1")
    if not 0 <= out["seed"] < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return out


def _header(command: str, resolved: dict) -> str:
    return (
        f"# zeroone {command}\n"
        f"# config: {json.dumps(resolved, sort_keys=True)}\n"
        f"# seed: {resolved.get('seed', '')}\n"
    )


def _csv(rows: list, columns: list) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


# commands --------------------------------------------------------------------

def index_report(sentence, params: TorusParams) -> str:
    lines = [f"sentence: {format_sentence(sentence)}"]
    for i, leaf in enumerate(leaves(sentence), 1):
        mins = min_plus_counts(leaf, params)
        k = max(mins)
        lines.append(
            f"leaf {i}: {format_sentence(leaf)}\n"
            f"  min plus counts: {', '.join(_index_text(v) for v in mins)}\n"
            f"  k(L) = {_index_text(k)}"
        )
    return "\n".join(lines) + "\n"


def _index_text(k) -> str:
    return "INFINITY" if k == INFINITY else str(int(k))


def cmd_index(args) -> str:
    text = Path(args.sentence_file).read_text()
    try:
        sentence = parse_sentence(text)
    except (SentenceSyntaxError, SentenceSemanticError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.config:
        torus = _torus(load_config(args.config))
        d, p, rho = torus["d"], torus["p"], torus["rho"]
    else:
        d, p, rho = infer_dimension(sentence) or 1, 1, 1
    # ball templates do not depend on n once n > 2 rho r
    n = 2 * rho * max(leaf.r for leaf in leaves(sentence)) + 1
    params = TorusParams(d, max(n, 2), p, rho)
    try:
        parse_sentence(text, params)
    except SentenceSemanticError as exc:
        raise ConfigError(str(exc)) from exc
    return index_report(sentence, params)


def trend_flag(points: list) -> str:
    """``→0`` / ``→1`` / ``indeterminate`` from the first and last estimates."""
    first, last = points[0], points[-1]
    if last < LOW_BAND and last <= first:
        return "→0"
    if last > HIGH_BAND and last >= first:
        return "→1"
    return "indeterminate"


def _schedule(cfg: dict, sentence, params: TorusParams) -> tuple:
    sched = cfg.get("schedule")
    if not isinstance(sched, dict):
        raise ConfigError("sweep needs a [schedule] section")
    leaf_k = [max(min_plus_counts(leaf, params)) for leaf in leaves(sentence)]
    k = sched.get("k", "auto")
    if k == "auto":
        if len(leaf_k) != 1 or leaf_k[0] in (0, INFINITY):
            raise ConfigError("schedule k='auto' needs one leaf with a finite positive index")
        k = leaf_k[0]
    resolved = {
        "c": float(sched.get("c", 1.0)),
        "k": int(k),
        "theta": float(sched.get("theta", 1.0)),
        "b": float(sched.get("b", 0.0)),
        "a_table": {str(n): float(a) for n, a in sched.get("a_table", {}).items()},
        "b_table": {str(n): float(b) for n, b in sched.get("b_table", {}).items()},
    }
    try:
        schedule = PotentialSchedule(
            resolved["c"], resolved["k"], resolved["theta"], resolved["b"],
            resolved["a_table"], resolved["b_table"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return schedule, resolved, leaf_k


def cmd_sweep(args) -> str:
    cfg = load_config(args.config)
    common = _common(cfg, args)
    torus = _torus(cfg, DEFAULT_SWEEP_GRID)
    if "sentence" not in cfg:
        raise ConfigError("sweep needs a sentence")
    sentences = {n: _sentence(cfg["sentence"], _params(torus, n)) for n in torus["n"]}
    sentence = sentences[torus["n"][0]]
    schedule, sched_resolved, leaf_k = _schedule(cfg, sentence, _params(torus, torus["n"][0]))
    exact_sites = int(cfg.get("exact_max_sites", DEFAULT_EXACT_SITES))
    potentials = {}
    for n in torus["n"]:
        try:
            potentials[n] = schedule_eval(schedule, n, torus["d"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    resolved = dict(common, torus=torus, schedule=sched_resolved, sentence=format_sentence(sentence), exact_max_sites=exact_sites)
    k_text = ";".join(_index_text(k) for k in leaf_k)
    rows = []
    for n in torus["n"]:
        params = _params(torus, n)
        ising = potentials[n]
        if params.size <= min(exact_sites, EXACT_MAX_SITES):
            est = exact_probability(params, ising, sentences[n])
        else:
            est = estimate_probability(params, ising, sentences[n], common["replicas"], replica_seed(common["seed"], n), common["method"])
        rows.append({
            "experiment": common["experiment"],
            "n": n,
            "a": ising.a,
            "b": ising.b,
            "k": k_text,
            "diagnostic": math.exp(ising.a) * n ** (torus["d"] / (2 * schedule.k)),
            "method": est.method,
            "point": est.point,
            "stderr": est.stderr,
            "replicas": est.replicas,
            "seed": common["seed"],
            "sentence_hash": sentence_hash(sentence),
        })
    columns = ["experiment", "n", "a", "b", "k", "diagnostic", "method", "point", "stderr", "replicas", "seed", "sentence_hash"]
    trend = trend_flag([row["point"] for row in rows])
    return _header("sweep", resolved) + _csv(rows, columns) + f"# trend: {trend}\n"


def cmd_exact(args) -> str:
    cfg = load_config(args.config)
    common = _common(cfg, args)
    torus = _torus(cfg)
    spec = _model(cfg)
    model = build_model(spec)
    if isinstance(model, ShiftFieldParams):
        raise ConfigError("exact probabilities need a bernoulli or ising model")
    texts = cfg.get("sentences") or ([cfg["sentence"]] if "sentence" in cfg else [])
    if not texts:
        raise ConfigError("exact needs 'sentence' or 'sentences'")
    for n in torus["n"]:
        if n ** torus["d"] > EXACT_MAX_SITES:
            raise EnumerationBoundError(f"n^d = {n ** torus['d']} exceeds the exact bound {EXACT_MAX_SITES}")
    parsed = {n: [_sentence(t, _params(torus, n)) for t in texts] for n in torus["n"]}
    resolved = dict(common, torus=torus, model=spec, sentences=[format_sentence(s) for s in parsed[torus["n"][0]]])
    rows = []
    for n in torus["n"]:
        params = _params(torus, n)
        for sentence in parsed[n]:
            est = exact_probability(params, model, sentence)
            rows.append({
                "experiment": common["experiment"],
                "n": n,
                "model": describe_model(model),
                "sentence_hash": sentence_hash(sentence),
                "sentence": format_sentence(sentence),
                "method": est.method,
                "point": est.point,
                "stderr": est.stderr,
                "replicas": est.replicas,
                "seed": common["seed"],
            })
    columns = ["experiment", "n", "model", "sentence_hash", "sentence", "method", "point", "stderr", "replicas", "seed"]
    return _header("exact", resolved) + _csv(rows, columns)


def _single_n(torus: dict, command: str) -> int:
    if len(torus["n"]) != 1:
        raise ConfigError(f"{command} needs a single torus side n")
    return torus["n"][0]


def cmd_mixing(args) -> str:
    cfg = load_config(args.config)
    common = _common(cfg, args)
    torus = _torus(cfg)
    params = _params(torus, _single_n(torus, "mixing"))
    spec = _model(cfg)
    model = build_model(spec)
    mix = cfg.get("mixing", {})
    radius = int(mix.get("radius", 0))
    distances = [int(s) for s in mix.get("distances", [1, 2, 3])]
    resolved = dict(common, torus=torus, model=spec, mixing={"radius": radius, "distances": distances})
    try:
        ball_template(params, radius)
    except ValueError as exc:
        raise InfeasibleError(str(exc)) from exc
    report = estimate_mixing(params, model, radius, distances, common["replicas"], common["seed"], common["method"])
    exact = None
    if params.size <= EXACT_MAX_SITES and not isinstance(model, ShiftFieldParams):
        exact = exact_mixing(params, model, radius, distances)
    rows = []
    for s in report.distances:
        rows.append({
            "experiment": common["experiment"],
            "n": params.n,
            "model": describe_model(model),
            "distance": s,
            "actual_distance": report.actual_distances[s],
            "max_abs_cov": report.max_abs_cov[s],
            "exact_max_abs_cov": float(abs(exact[s][0]).max()) if exact else "",
            "replicas": report.replicas,
            "seed": common["seed"],
        })
    columns = ["experiment", "n", "model", "distance", "actual_distance", "max_abs_cov", "exact_max_abs_cov", "replicas", "seed"]
    flag = "true" if report.monotone_decay else "false"
    return _header("mixing", resolved) + _csv(rows, columns) + f"# monotone_decay: {flag}\n"


def cmd_sample(args) -> str:
    cfg = load_config(args.config)
    common = _common(cfg, args)
    torus = _torus(cfg)
    params = _params(torus, _single_n(torus, "sample"))
    spec = _model(cfg)
    model = build_model(spec)
    sample_cfg = cfg.get("sample", {})
    count = int(sample_cfg.get("count", 1))
    desc = None
    resolved_sample = {"count": count}
    if "description" in sample_cfg:
        radius = int(sample_cfg.get("radius", 0))
        try:
            desc = LocalConfiguration.from_string(ball_template(params, radius), sample_cfg["description"])
        except ValueError as exc:
            raise ConfigError(f"description: {exc}") from exc
        resolved_sample.update(description=desc.to_string(), radius=radius)
    resolved = dict(common, torus=torus, model=spec, sample=resolved_sample)
    configs = sample_batch(params, model, count, common["seed"], method=common["method"])
    parts = [_header("sample", resolved)]
    for i, row in enumerate(configs):
        config = Configuration(params, row)
        line = f"# sample={i}"
        if desc is not None:
            line += f" match_count={count_matches(config, desc)}"
        parts.append(line + "\n" + dump_configuration(config))
    return "".join(parts)


COMMANDS = {
    "index": cmd_index,
    "sweep": cmd_sweep,
    "exact": cmd_exact,
    "mixing": cmd_mixing,
    "sample": cmd_sample,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zeroone", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "index":
            p.add_argument("sentence_file", help="file holding one sentence in the DSL")
            p.add_argument("--config", help="optional config with a [torus] section (d, p, rho)")
        else:
            p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--replicas", type=int)
        p.add_argument("--out", help="write output here instead of stdout")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        output = COMMANDS[args.command](args)
    except (ConfigError, KeyError, TypeError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InfeasibleError, EnumerationCapError, EnumerationBoundError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    else:
        sys.stdout.write(output)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

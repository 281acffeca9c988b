"""Command-line experiment runner.

Every subcommand is a thin dispatch onto a library call; output rows are
written as CSV or JSON behind a manifest block that records the config, the
package version and the provenance of each number.

Exit codes: 0 success, 2 invalid configuration, 3 capacity exceeded,
4 rate infeasible, 5 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as _dt
import io
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from aeptools import __version__
from aeptools.clt import cf_table, ks_table
from aeptools.coding import (
    CodeParams,
    build_codebook,
    compress,
    decompress,
    rate_sweep,
    read_block_file,
    write_block_file,
)
from aeptools.entropy import LN2, Distribution, QParam, load_distribution, shannon_entropy, tsallis_entropy
from aeptools.errors import AepError, CapacityError, RateInfeasibleError
from aeptools.typicality import (
    EXHAUSTIVE_CAP,
    MAX_TYPE_CLASSES,
    enumerate_typical_set,
    estimate_q_concentration,
    estimate_typicality_probability,
    q_set_census,
    q_surprisal_distribution,
    surprisal_distribution,
    top_set_mass,
    type_class_count,
)

EXPERIMENTS = (
    "entropy",
    "property1",
    "property2",
    "property3",
    "property4",
    "rate-sweep",
    "compress",
    "decompress",
    "clt",
    "q-census",
)

OUTPUT_DIR_ENV = "AEPTOOLS_OUTPUT_DIR"

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_RATE, EXIT_IO = 0, 2, 3, 4, 5

# Frozen column schemas; JSON rows carry exactly these keys.
COLUMNS = {
    "entropy": ["quantity", "q", "value", "units"],
    "property1": ["n", "epsilon", "trials", "seed", "successes", "estimate", "ci_low", "ci_high"],
    "property2": [
        "n", "epsilon", "delta", "method", "count", "log2_count", "mass",
        "lower_bound", "upper_bound", "within_bounds",
    ],
    "property3": ["n", "rate", "top_set_mass", "method"],
    "property4": [
        "n", "q", "epsilon", "trials", "seed", "successes", "estimate", "ci_low", "ci_high",
        "tsallis_entropy", "statistic_variance", "closed_form_variance", "variance_se",
    ],
    "rate-sweep": [
        "rate", "epsilon", "width", "feasible", "log2_typical_size", "min_rate",
        "reliability", "ci_low", "ci_high", "mass_bound", "trials", "seed",
    ],
    "compress": ["blocks", "letters", "failures", "width", "bytes", "file"],
    "decompress": ["blocks", "letters", "failures", "file"],
    "clt-ks": ["n", "ks_distance", "trials", "seed"],
    "clt-cf": ["a", "re", "im"],
    "q-census": [
        "n", "q", "epsilon", "delta", "method", "count", "log2_count", "mass",
        "candidate_lower", "candidate_upper", "exploratory",
    ],
}

MONTE_CARLO = {"property1", "property4", "rate-sweep", "clt"}


@dataclass
class ExperimentConfig:
    experiment: str
    dist: Optional[str] = None
    values: Optional[List[float]] = None
    n: List[int] = field(default_factory=lambda: [100])
    epsilon: float = 0.05
    epsilon_units: Optional[str] = None
    q: List[float] = field(default_factory=lambda: [2.0])
    rates: List[float] = field(default_factory=list)
    delta: float = 0.1
    trials: int = 10_000
    seed: int = 0
    threads: int = 1
    brute_force: bool = False
    epsilon_policy: str = "midpoint"
    variable: str = "values"
    table: str = "ks"
    grid: List[float] = field(default_factory=lambda: [float(x) for x in np.linspace(-math.pi, math.pi, 9)])
    input: Optional[str] = None
    out: Optional[str] = None
    format: str = "csv"
    pin_timestamp: Optional[str] = None


@dataclass(frozen=True)
class Violation:
    field: str
    constraint: str
    actual: object
    category: str = "config"

    def __str__(self):
        return f"{self.field}: expected {self.constraint}, got {self.actual!r}"


def parse_distribution(spec: str, values=None) -> Distribution:
    """A path, an inline JSON document, or comma-separated probabilities."""
    text = spec.strip()
    if text.startswith("{") or os.path.exists(text) or text.endswith(".json"):
        d = load_distribution(text)
    else:
        d = Distribution([float(x) for x in text.split(",") if x.strip()])
    if values is not None:
        d = d.with_values(values)
    return d


def validate(config: ExperimentConfig) -> List[Violation]:
    """Every precondition ``run`` would check, as a list; never raises."""
    out: List[Violation] = []
    add = lambda *a: out.append(Violation(*a))  # noqa: E731
    exp = config.experiment
    if exp not in EXPERIMENTS:
        add("experiment", f"one of {', '.join(EXPERIMENTS)}", exp)
        return out
    if config.format not in ("csv", "json"):
        add("format", "csv or json", config.format)
    if config.threads < 1:
        add("threads", "threads >= 1", config.threads)

    d = None
    if exp != "decompress" or config.dist is not None:
        if not config.dist:
            add("dist", "a distribution file or inline probabilities", config.dist)
        else:
            looks_like_file = not config.dist.strip().startswith("{") and not re.fullmatch(
                r"[\d.eE+\-,\s]+", config.dist
            )
            if looks_like_file and not os.path.exists(config.dist):
                add("dist", "file exists", config.dist, "io")
            else:
                try:
                    d = parse_distribution(config.dist, config.values)
                except (ValueError, AepError, OSError) as exc:
                    add("dist", "valid distribution", str(exc))

    if exp in ("property1", "property2", "property3", "property4", "rate-sweep", "clt", "q-census", "compress"):
        for n in config.n:
            if n < 1:
                add("n", "n >= 1", n)
        if not config.n:
            add("n", "at least one block length", config.n)
    if exp in ("property1", "property2", "property4", "q-census", "compress", "rate-sweep") and not config.epsilon >= 0:
        add("epsilon", "epsilon >= 0", config.epsilon)
    if config.epsilon_units not in (None, "bits", "nats"):
        add("epsilon_units", "bits or nats", config.epsilon_units)
    if exp in ("property4", "q-census"):
        for q in config.q:
            if not q > 0:
                add("q", "q > 0", q)
    if exp in ("property1", "property4", "rate-sweep", "clt"):
        if config.trials < 1:
            add("trials", "trials >= 1", config.trials)
        if not 0 <= config.seed < 2**64:
            add("seed", "0 <= seed < 2^64", config.seed)
    if exp in ("property2", "q-census") and not 0 < config.delta < 1:
        add("delta", "0 < delta < 1", config.delta)
    if exp in ("property3", "rate-sweep", "compress"):
        if not config.rates:
            add("rate", "at least one rate", config.rates)
        for r in config.rates:
            if not r > 0:
                add("rate", "rate > 0", r)
        if exp == "rate-sweep" and config.rates != sorted(config.rates):
            add("rates", "ascending order", config.rates)
        if exp == "compress" and len(config.rates) > 1:
            add("rate", "a single rate", config.rates)
    if exp == "rate-sweep" and config.epsilon_policy not in ("midpoint", "max-feasible", "fixed"):
        add("epsilon_policy", "midpoint, max-feasible or fixed", config.epsilon_policy)
    if exp == "clt":
        if config.table not in ("ks", "cf"):
            add("table", "ks or cf", config.table)
        if config.variable not in ("values", "surprisal", "q-surprisal"):
            add("variable", "values, surprisal or q-surprisal", config.variable)
        if config.variable == "values" and d is not None and d.values is None:
            add("values", "letter values for the 'values' variable", None)
    if exp in ("compress", "decompress"):
        if not config.input:
            add("input", "an input file", config.input)
        elif not os.path.exists(config.input):
            add("input", "file exists", config.input, "io")
        if not config.out:
            add("out", "an output file", config.out)

    if d is not None and exp in ("property2", "property3", "q-census", "rate-sweep", "compress"):
        for n in config.n:
            if n < 1:
                continue
            if config.brute_force and exp in ("property2", "property3", "q-census"):
                if d.size**n > EXHAUSTIVE_CAP:
                    add("n", f"W^n <= {EXHAUSTIVE_CAP} for brute force", f"{d.size}^{n}", "capacity")
            elif type_class_count(n, d.support.size) > MAX_TYPE_CLASSES:
                add("n", f"at most {MAX_TYPE_CLASSES} type classes", n, "capacity")
    return out


def _manifest(config: ExperimentConfig, d: Optional[Distribution]) -> dict:
    stamp = config.pin_timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    cfg = dataclasses.asdict(config)
    cfg.pop("pin_timestamp")
    cfg.pop("threads")  # results do not depend on it, so neither may the file
    return {
        "tool": "aeptools",
        "version": __version__,
        "timestamp": stamp,
        "experiment": config.experiment,
        "config": cfg,
        "distribution": d.to_dict() if d is not None else None,
        "distribution_sha256": d.digest() if d is not None else None,
        "provenance": {
            "method": "monte-carlo" if config.experiment in MONTE_CARLO else "exact",
            "seed": config.seed if config.experiment in MONTE_CARLO else None,
            "trials": config.trials if config.experiment in MONTE_CARLO else None,
        },
    }


def _eps_nats(config):
    return config.epsilon * LN2 if config.epsilon_units == "bits" else config.epsilon


def _rows(config: ExperimentConfig, d: Optional[Distribution]):
    exp = config.experiment
    if exp == "entropy":
        rows = [
            {"quantity": "shannon", "q": 1.0, "value": shannon_entropy(d).value, "units": "bits"},
            {"quantity": "shannon", "q": 1.0, "value": shannon_entropy(d, "nats").value, "units": "nats"},
        ]
        for q in config.q:
            rows.append({"quantity": "tsallis", "q": q, "value": tsallis_entropy(d, QParam(q)).value, "units": "nats"})
        return "entropy", rows
    if exp == "property1":
        eps = config.epsilon / LN2 if config.epsilon_units == "nats" else config.epsilon
        rows = []
        for n in config.n:
            e = estimate_typicality_probability(d, n, eps, config.trials, config.seed, config.threads)
            rows.append({
                "n": n, "epsilon": eps, "trials": e.trials, "seed": e.seed, "successes": e.successes,
                "estimate": e.estimate, "ci_low": e.ci_low, "ci_high": e.ci_high,
            })
        return exp, rows
    if exp == "property2":
        eps = config.epsilon / LN2 if config.epsilon_units == "nats" else config.epsilon
        rows = []
        for n in config.n:
            c = enumerate_typical_set(d, n, eps, config.delta, exhaustive=config.brute_force)
            rows.append({
                "n": n, "epsilon": eps, "delta": c.delta, "method": c.method, "count": c.count,
                "log2_count": c.log2_count, "mass": c.mass, "lower_bound": c.lower_bound,
                "upper_bound": c.upper_bound, "within_bounds": c.within_bounds,
            })
        return exp, rows
    if exp == "property3":
        rows = []
        for n in config.n:
            for r in config.rates:
                rows.append({
                    "n": n, "rate": r,
                    "top_set_mass": top_set_mass(d, n, r, exhaustive=config.brute_force),
                    "method": "exhaustive" if config.brute_force else "type-class",
                })
        return exp, rows
    if exp == "property4":
        eps = _eps_nats(config)
        rows = []
        for n in config.n:
            for q in config.q:
                e = estimate_q_concentration(d, n, eps, QParam(q), config.trials, config.seed, config.threads)
                rows.append({
                    "n": n, "q": q, "epsilon": eps, "trials": e.trials, "seed": e.seed,
                    "successes": e.successes, "estimate": e.estimate, "ci_low": e.ci_low,
                    "ci_high": e.ci_high, "tsallis_entropy": e.params["tsallis_nats"],
                    "statistic_variance": e.statistic_variance,
                    "closed_form_variance": e.closed_form_variance, "variance_se": e.variance_se,
                })
        return exp, rows
    if exp == "rate-sweep":
        rows = []
        for n in config.n:
            for r in rate_sweep(d, n, config.rates, config.epsilon_policy, config.trials, config.seed,
                                fixed_epsilon=config.epsilon, threads=config.threads):
                rows.append(dataclasses.asdict(r))
        return exp, rows
    if exp == "q-census":
        eps = _eps_nats(config)
        rows = []
        for n in config.n:
            for q in config.q:
                c = q_set_census(d, n, eps, QParam(q), config.delta, exhaustive=config.brute_force)
                rows.append({
                    "n": n, "q": q, "epsilon": eps, "delta": c.delta, "method": c.method,
                    "count": c.count, "log2_count": c.log2_count, "mass": c.mass,
                    "candidate_lower": c.lower_bound, "candidate_upper": c.upper_bound,
                    "exploratory": c.exploratory,
                })
        return exp, rows
    if exp == "clt":
        if config.variable == "surprisal":
            d = surprisal_distribution(d)
        elif config.variable == "q-surprisal":
            d = q_surprisal_distribution(d, QParam(config.q[0]))
        if config.table == "cf":
            return "clt-cf", [{"a": a, "re": re_, "im": im} for a, re_, im in cf_table(d, config.grid)]
        rows = [
            {"n": n, "ks_distance": dist, "trials": config.trials, "seed": config.seed}
            for n, dist in ks_table(d, config.n, config.trials, config.seed, config.threads)
        ]
        return "clt-ks", rows
    if exp == "compress":
        return exp, [_compress(config, d)]
    if exp == "decompress":
        return exp, [_decompress(config, d)]
    raise AssertionError(exp)


def read_letters(path: str) -> np.ndarray:
    """Letters as integers separated by whitespace or commas, or one run of single digits."""
    with open(path) as fh:
        text = fh.read()
    tokens = [t for t in re.split(r"[\s,]+", text) if t]
    if len(tokens) == 1 and len(tokens[0]) > 1:
        tokens = list(tokens[0])
    return np.array([int(t) for t in tokens], dtype=np.int64)


def _compress(config, d):
    letters = read_letters(config.input)
    params = CodeParams(config.n[0], config.rates[0], config.epsilon)
    book = build_codebook(d, params)
    words = compress(book, letters)
    with open(config.out, "wb") as fh:
        write_block_file(fh, book, words, int(letters.size))
    return {
        "blocks": len(words), "letters": int(letters.size),
        "failures": sum(not w.ok for w in words), "width": 1 + book.width,
        "bytes": os.path.getsize(config.out), "file": config.out,
    }


def _decompress(config, d):
    with open(config.input, "rb") as fh:
        header, words = read_block_file(fh)
    if d is None:
        raise AepError("decompress needs --dist to rebuild the codebook")
    if d.digest() != header.dist_hash:
        raise AepError("distribution does not match the hash stored in the file header")
    book = build_codebook(d, header.params)
    blocks = decompress(book, words)
    lines, produced = [], 0
    for s in blocks:
        take = min(header.n, header.letters - produced)
        produced += take
        lines.append("FAIL" if s is None else " ".join(str(int(x)) for x in s[:take]))
    with open(config.out, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return {
        "blocks": len(blocks), "letters": header.letters,
        "failures": sum(s is None for s in blocks), "file": config.out,
    }


def render(schema: str, rows, manifest: dict, fmt: str) -> str:
    cols = COLUMNS[schema]
    if fmt == "json":
        doc = {"manifest": manifest, "columns": cols, "rows": [{c: r.get(c) for c in cols} for r in rows]}
        return json.dumps(doc, indent=2, default=str) + "\n"
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(manifest, sort_keys=True, default=str) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        writer.writerow(["" if r.get(c) is None else r.get(c) for c in cols])
    return buf.getvalue()


def _fail(code: int, category: str, message: str, extra=None) -> int:
    payload = {"error": category, "message": message}
    if extra:
        payload.update(extra)
    print(json.dumps(payload, default=str), file=sys.stderr)
    return code


def run(config: ExperimentConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    problems = validate(config)
    if problems:
        cats = {p.category for p in problems}
        code = EXIT_CONFIG if "config" in cats else EXIT_CAPACITY if "capacity" in cats else EXIT_IO
        category = "config" if code == EXIT_CONFIG else "capacity" if code == EXIT_CAPACITY else "io"
        return _fail(code, category, "; ".join(map(str, problems)),
                     {"violations": [dataclasses.asdict(p) for p in problems]})
    try:
        d = parse_distribution(config.dist, config.values) if config.dist else None
        schema, rows = _rows(config, d)
        text = render(schema, rows, _manifest(config, d), config.format)
        target = config.out if config.experiment not in ("compress", "decompress") else None
        if target is None and config.experiment not in ("compress", "decompress") and os.environ.get(OUTPUT_DIR_ENV):
            target = os.path.join(os.environ[OUTPUT_DIR_ENV], f"{config.experiment}.{config.format}")
        if target:
            with open(target, "w") as fh:
                fh.write(text)
        else:
            stdout.write(text)
    except RateInfeasibleError as exc:
        return _fail(EXIT_RATE, exc.category, str(exc), {"min_rate": exc.min_rate})
    except CapacityError as exc:
        return _fail(EXIT_CAPACITY, exc.category, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, "io", str(exc))
    except AepError as exc:
        return _fail(EXIT_CONFIG, exc.category, str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    return EXIT_OK


def _floats(text: str) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aeptools", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dist", help="distribution JSON file, inline JSON, or comma-separated probabilities")
    common.add_argument("--values", type=_floats, help="comma-separated letter values")
    common.add_argument("--out", help="output file (default: stdout, or $%s)" % OUTPUT_DIR_ENV)
    common.add_argument("--format", default="csv", help="csv or json")
    common.add_argument("--pin-timestamp", help="fixed manifest timestamp for reproducible files")
    common.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")

    def add(name, help_, *opts):
        p = sub.add_parser(name, parents=[common], help=help_)
        for opt in opts:
            opt(p)
        return p

    n_opt = lambda p: p.add_argument("--n", type=_ints, default=[100], help="block length(s), comma-separated")  # noqa: E731
    eps_opt = lambda p: p.add_argument("--epsilon", type=float, default=0.05)  # noqa: E731
    units_opt = lambda p: p.add_argument("--epsilon-units", choices=("bits", "nats"), default=None)  # noqa: E731
    q_opt = lambda p: p.add_argument("--q", type=_floats, default=[2.0], help="entropic index(es)")  # noqa: E731
    mc_opt = lambda p: (p.add_argument("--trials", type=int, default=10_000), p.add_argument("--seed", type=int, default=0))  # noqa: E731
    delta_opt = lambda p: p.add_argument("--delta", type=float, default=0.1)  # noqa: E731
    bf_opt = lambda p: p.add_argument("--brute-force", action="store_true", help="enumerate every sequence")  # noqa: E731

    def rate_opt(p):
        p.add_argument("--rate", "--rates", dest="rates", type=_floats, default=[], help="rate(s) in bits per letter")

    add("entropy", "Shannon and Tsallis entropies of a distribution", q_opt)
    add("property1", "Monte Carlo probability of epsilon-typicality", n_opt, eps_opt, units_opt, mc_opt)
    add("property2", "exact typical-set census against its bounds", n_opt, eps_opt, units_opt, delta_opt, bf_opt)
    add("property3", "mass of the 2^{nR} most probable sequences", n_opt, rate_opt, bf_opt)
    add("property4", "Monte Carlo q-concentration (epsilon in nats)", n_opt, eps_opt, units_opt, q_opt, mc_opt)
    sweep = add("rate-sweep", "block-code reliability across rates", n_opt, rate_opt, mc_opt)
    sweep.add_argument("--epsilon-policy", default="midpoint", help="midpoint, max-feasible or fixed")
    sweep.add_argument("--epsilon", type=float, default=0.01, help="epsilon for the fixed policy and below H")
    add("compress", "encode a letter file into typical-set blocks", n_opt, rate_opt, eps_opt,
        lambda p: p.add_argument("--input", required=True))
    add("decompress", "decode a block file", lambda p: p.add_argument("--input", required=True))
    clt = add("clt", "KS distance of sums to the normal, or a cf table", n_opt, mc_opt, q_opt)
    clt.add_argument("--table", default="ks", help="ks or cf")
    clt.add_argument("--variable", default="values", help="values, surprisal or q-surprisal")
    clt.add_argument("--grid", type=_floats, help="a-grid for the cf table")
    add("q-census", "exact census of the q-typical set (exploratory)", n_opt, eps_opt, units_opt, q_opt, delta_opt, bf_opt)
    return parser


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=ns.experiment)
    for f in dataclasses.fields(ExperimentConfig):
        if f.name != "experiment" and getattr(ns, f.name, None) is not None:
            setattr(cfg, f.name, getattr(ns, f.name))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    return run(config_from_args(ns))


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: fit, sample, exact, count, simulate, report.

Every run resolves its configuration into a flat manifest (key=value lines,
including the seed and library versions) and writes it next to the outputs,
so `ebggm rerun manifest.txt` reproduces the run byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import platform
import sys
import typing
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
import scipy

from . import __version__
from .dataio import (fmt, ingest_csv, read_manifest, read_posterior_csv,
                     sha256_of, write_acceptance_trace, write_csv,
                     write_data_csv, write_manifest, write_posterior_csv,
                     write_saem_trace, write_visit_log)
from .errors import EbggmError, ParseError
from .exact import exact_posterior
from .graphs import Graph, count_decomposable, edge_pair, n_candidate_edges, \
    named_graph, to_dot
from .hiw import Hyperparams, PosteriorScorer, simulate_dataset
from .saem import SaemConfig, run_saem
from .sampler import (ChainState, KernelConfig, MoveCache, edge_weights,
                      run_chain)

OUT_DIR_ENV = "EBGGM_OUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one command invocation.

    String fields use "" for absent; "auto" for kernel means: let fit pick
    between alternate and add_delete from the data, use add_delete elsewhere.
    """

    command: str
    data: str = ""
    center: bool = True
    standardize: bool = True
    # model hyperparameters
    delta: float = 1.0
    phi_mode: str = "scaled_identity"
    tau: float = 1.0
    graph_prior: str = "bernoulli"
    r: float = 0.5
    # chain settings
    kernel: str = "auto"
    weight_floor: float = 1e-12
    n_steps: int = 100000
    n_burn: int = 10000
    # EM settings
    n_iter: int = 300
    n_unit: int = 100
    m_first: int = 500
    m_rest: int = 10
    n_warm: int = 5
    init_tau: float = 1e-3
    init_r: float = 0.5
    # simulate / count / report inputs
    p: int = 0
    graph: str = ""
    n: int = 100
    top_k: int = 10
    table: str = ""
    # run plumbing
    seed: int = 0
    out_dir: str = ""

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be at least 1, got {self.top_k}")


COMMANDS = ("fit", "sample", "exact", "count", "simulate", "report")
_HINTS = typing.get_type_hints(RunConfig)


def config_from_manifest(mapping):
    """Rebuild a RunConfig from a manifest's key=value mapping.

    Keys that are not RunConfig fields (versions, checksums) are ignored.
    """
    if "command" not in mapping:
        raise ParseError("manifest has no command= entry")
    kwargs = {}
    for field in dataclasses.fields(RunConfig):
        if field.name not in mapping:
            continue
        text = mapping[field.name]
        hint = _HINTS[field.name]
        try:
            if hint is bool:
                kwargs[field.name] = text.lower() in ("true", "1", "yes")
            elif hint is int:
                kwargs[field.name] = int(text)
            elif hint is float:
                kwargs[field.name] = float(text)
            else:
                kwargs[field.name] = text
        except ValueError:
            raise ParseError(
                f"manifest entry {field.name}={text!r} is not a valid "
                f"{hint.__name__}") from None
    return RunConfig(**kwargs)


def _resolve_out_dir(cfg):
    return cfg.out_dir or os.environ.get(OUT_DIR_ENV, "") or "ebggm_out"


def _resolve_kernel(cfg, stats=None):
    if cfg.kernel != "auto":
        return cfg.kernel
    if cfg.command == "fit" and stats is not None:
        try:
            stats.inv_empirical
            return "alternate"
        except EbggmError:
            return "add_delete"
    return "add_delete"


def _hyperparams(cfg):
    return Hyperparams(delta=cfg.delta, phi_mode=cfg.phi_mode, tau=cfg.tau,
                       graph_prior=cfg.graph_prior, r=cfg.r)


def _finish(cfg, out, extras):
    """Write the manifest for a resolved run; returns its path."""
    mapping = dataclasses.asdict(cfg)
    mapping.update(extras)
    mapping["package_version"] = __version__
    mapping["python_version"] = platform.python_version()
    mapping["numpy_version"] = np.__version__
    mapping["scipy_version"] = scipy.__version__
    path = os.path.join(out, "manifest.txt")
    write_manifest(path, mapping)
    return path


def _inclusion_probs(p, pairs):
    m = n_candidate_edges(p)
    incl = np.zeros(m)
    for gid, weight in pairs:
        bits = gid
        while bits:
            low = bits & -bits
            incl[low.bit_length() - 1] += weight
            bits ^= low
    return incl


def _write_report(out, p, pairs, top_k, stdout=None):
    """Render top graphs, edge inclusion probabilities, and DOT files.

    pairs is a list of (graph bitset, weight) with weights summing to one,
    sorted by decreasing weight.
    """
    width = (Graph(p).m + 3) // 4
    top = pairs[:top_k]
    write_csv(os.path.join(out, "top_graphs.csv"),
              ("rank", "graph_id", "k_edges", "prob"),
              ((rank + 1, format(gid, f"0{width}x"), Graph(p, gid).edge_count, w)
               for rank, (gid, w) in enumerate(top)))
    incl = _inclusion_probs(p, pairs)
    write_csv(os.path.join(out, "edge_marginals.csv"), ("i", "j", "prob"),
              ((i + 1, j + 1, incl[k])
               for k, (i, j) in ((k, edge_pair(p, k)) for k in range(len(incl)))))
    lines = ["top graphs", "rank graph_id k_edges prob"]
    for rank, (gid, w) in enumerate(top):
        lines.append(f"{rank + 1} {format(gid, f'0{width}x')} "
                     f"{Graph(p, gid).edge_count} {fmt(w)}")
    lines.append("")
    lines.append("edge inclusion probabilities")
    lines.append("i j prob")
    for k in range(len(incl)):
        i, j = edge_pair(p, k)
        lines.append(f"{i + 1} {j + 1} {fmt(incl[k])}")
    with open(os.path.join(out, "report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for rank, (gid, _) in enumerate(top):
        with open(os.path.join(out, f"top_{rank + 1}.dot"), "w") as fh:
            fh.write(to_dot(Graph(p, gid), name=f"G{rank + 1}"))
    if stdout is not None and top:
        gid, w = top[0]
        print(f"top1_graph={format(gid, f'0{width}x')} top1_prob={fmt(w)}",
              file=stdout)


def _require(cfg, field, hint):
    if not getattr(cfg, field):
        raise ValueError(f"command {cfg.command!r} needs --{field} ({hint})")


def _cmd_count(cfg, out):
    _require(cfg, "p", "number of vertices")
    total = 2 ** n_candidate_edges(cfg.p)
    dec = count_decomposable(cfg.p)
    line = f"p={cfg.p} total={total} decomposable={dec}"
    print(line)
    with open(os.path.join(out, "counts.txt"), "w") as fh:
        fh.write(line + "\n")
    return cfg, {}


def _cmd_simulate(cfg, out):
    _require(cfg, "graph", "builtin name or hex graph ID")
    g = named_graph(cfg.graph, cfg.p or None)
    if cfg.p and g.p != cfg.p:
        raise ValueError(f"--graph {cfg.graph!r} has p={g.p}, but --p {cfg.p} "
                         "was given")
    if cfg.n < 1:
        raise ValueError(f"--n must be at least 1, got {cfg.n}")
    rng = np.random.default_rng(cfg.seed)
    data, _ = simulate_dataset(g, cfg.tau, cfg.delta, cfg.n, rng)
    write_data_csv(os.path.join(out, "data.csv"), data)
    with open(os.path.join(out, "truth.dot"), "w") as fh:
        fh.write(to_dot(g, name="truth"))
    print(f"data={os.path.join(out, 'data.csv')} graph_id={g.id_hex}")
    return replace(cfg, p=g.p), {"graph_id": g.id_hex}


def _cmd_exact(cfg, out):
    _require(cfg, "data", "CSV dataset path")
    stats, _ = ingest_csv(cfg.data, center=cfg.center, standardize=cfg.standardize)
    table = exact_posterior(stats, _hyperparams(cfg))
    write_posterior_csv(os.path.join(out, "posterior.csv"), table)
    pairs = list(zip(table.graph_ids, (float(x) for x in table.probs)))
    _write_report(out, stats.p, pairs, cfg.top_k, stdout=sys.stdout)
    return cfg, {"data_sha256": sha256_of(cfg.data), "p": stats.p}


def _cmd_sample(cfg, out):
    _require(cfg, "data", "CSV dataset path")
    stats, _ = ingest_csv(cfg.data, center=cfg.center, standardize=cfg.standardize)
    mode = _resolve_kernel(cfg, stats)
    kernel = KernelConfig(mode=mode, weight_floor=cfg.weight_floor)
    hp = _hyperparams(cfg)
    rng = np.random.default_rng(cfg.seed)
    scorer = PosteriorScorer(stats, hp)
    moves = MoveCache()
    g0 = Graph(stats.p)
    state = ChainState(g0, scorer.score(g0))
    if cfg.n_burn:
        state, _ = run_chain(state, cfg.n_burn, stats, hp, kernel, rng,
                             scorer=scorer, moves=moves)
    state, log = run_chain(state, cfg.n_steps, stats, hp, kernel, rng,
                           scorer=scorer, moves=moves)
    write_visit_log(os.path.join(out, "visits.csv"), log)
    write_acceptance_trace(os.path.join(out, "acceptance.csv"), log)
    counts = Counter(log.graph_ids)
    total = len(log)
    pairs = sorted(((gid, c / total) for gid, c in counts.items()),
                   key=lambda t: (-t[1], t[0]))
    _write_report(out, stats.p, pairs, cfg.top_k)
    print(f"steps={total} accept_rate={fmt(log.acceptance_rate())}")
    return replace(cfg, kernel=mode), \
        {"data_sha256": sha256_of(cfg.data), "p": stats.p}


def _cmd_fit(cfg, out):
    _require(cfg, "data", "CSV dataset path")
    stats, _ = ingest_csv(cfg.data, center=cfg.center, standardize=cfg.standardize)
    mode = _resolve_kernel(cfg, stats)
    kernel = KernelConfig(mode=mode, weight_floor=cfg.weight_floor)
    hp_base = Hyperparams(delta=cfg.delta, phi_mode="scaled_identity",
                          tau=cfg.init_tau, graph_prior=cfg.graph_prior,
                          r=cfg.init_r)
    saem_cfg = SaemConfig(n_iter=cfg.n_iter, n_unit=cfg.n_unit,
                          m_first=cfg.m_first, m_rest=cfg.m_rest,
                          n_warm=cfg.n_warm, init_tau=cfg.init_tau,
                          init_r=cfg.init_r)
    rng = np.random.default_rng(cfg.seed)
    result = run_saem(stats, saem_cfg, hp_base, rng, kernel=kernel)
    write_saem_trace(os.path.join(out, "saem_trace.csv"), result)
    tail = result.trace[-min(50, len(result.trace)):, -1] if len(result.trace) \
        else np.zeros(1)
    summary = [f"tau_hat={fmt(result.tau)}",
               f"r_hat={fmt(result.r)}",
               f"init_graph={result.init_graph.id_hex}",
               f"final_graph={result.final_state.graph.id_hex}",
               f"tail_accept_rate={fmt(float(np.mean(tail)))}"]
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write("\n".join(summary) + "\n")
    print(f"tau_hat={fmt(result.tau)} r_hat={fmt(result.r)}")
    return replace(cfg, kernel=mode, phi_mode="scaled_identity"), \
        {"data_sha256": sha256_of(cfg.data), "p": stats.p}


def _pairs_from_table(path, p):
    """Load (graph, weight) pairs from a posterior table or a visit log."""
    import csv as _csv
    with open(path, newline="") as fh:
        header = next(_csv.reader(fh), None)
    if header is None:
        raise ParseError(f"{path}: empty table")
    if "prob" in header:
        pairs = read_posterior_csv(path, p)
    elif "graph_id" in header:
        id_col = header.index("graph_id")
        counts = Counter()
        with open(path, newline="") as fh:
            reader = _csv.reader(fh)
            next(reader)
            for rownum, cells in enumerate(reader, start=2):
                try:
                    counts[int(cells[id_col], 16)] += 1
                except (ValueError, IndexError):
                    raise ParseError(
                        f"{path}: row {rownum}: malformed graph_id") from None
        pairs = [(gid, float(c)) for gid, c in counts.items()]
        for gid, _ in pairs:
            Graph(p, gid)
    else:
        raise ParseError(f"{path}: no graph_id column")
    total = sum(w for _, w in pairs)
    if not pairs or total <= 0:
        raise ParseError(f"{path}: table carries no probability mass")
    if abs(total - 1.0) > 1e-9:
        pairs = [(gid, w / total) for gid, w in pairs]
    pairs.sort(key=lambda t: (-t[1], t[0]))
    return pairs


def _cmd_report(cfg, out):
    _require(cfg, "table", "posterior or visit-log CSV")
    _require(cfg, "p", "number of vertices the table refers to")
    pairs = _pairs_from_table(cfg.table, cfg.p)
    _write_report(out, cfg.p, pairs, cfg.top_k, stdout=sys.stdout)
    return cfg, {"table_sha256": sha256_of(cfg.table)}


_RUNNERS = {"count": _cmd_count, "simulate": _cmd_simulate, "exact": _cmd_exact,
            "sample": _cmd_sample, "fit": _cmd_fit, "report": _cmd_report}


def run_command(cfg: RunConfig):
    """Execute one command; returns the output directory used.

    The manifest is written last so a manifest on disk always describes a
    completed run.
    """
    out = _resolve_out_dir(cfg)
    os.makedirs(out, exist_ok=True)
    resolved, extras = _RUNNERS[cfg.command](replace(cfg, out_dir=out), out)
    _finish(resolved, out, extras)
    return out


def _field_type(name):
    hint = _HINTS[name]
    return {int: int, float: float, str: str}[hint]


def _add_options(sub, *names):
    for name in names:
        flag = "--" + name.replace("_", "-")
        default = RunConfig.__dataclass_fields__[name].default
        sub.add_argument(flag, dest=name, type=_field_type(name),
                         default=default)


def _add_data_options(sub):
    sub.add_argument("--data", dest="data", required=True,
                     help="CSV dataset, one row per observation")
    sub.add_argument("--no-center", dest="center", action="store_false",
                     help="keep column means (default subtracts them)")
    sub.add_argument("--no-standardize", dest="standardize",
                     action="store_false",
                     help="keep column scales (default divides by sample sd)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ebggm",
        description="Bayesian structure selection in decomposable Gaussian "
                    "graphical models")
    subs = parser.add_subparsers(dest="command")

    fit = subs.add_parser("fit", help="estimate (tau, r) by stochastic EM")
    _add_data_options(fit)
    _add_options(fit, "delta", "graph_prior", "kernel", "weight_floor",
                 "n_iter", "n_unit", "m_first", "m_rest", "n_warm",
                 "init_tau", "init_r", "seed", "out_dir")

    sample = subs.add_parser("sample", help="run a graph chain and report "
                                            "visited structures")
    _add_data_options(sample)
    _add_options(sample, "delta", "phi_mode", "tau", "graph_prior", "r",
                 "kernel", "weight_floor", "n_steps", "n_burn", "top_k",
                 "seed", "out_dir")

    exact = subs.add_parser("exact", help="exact posterior over all "
                                          "decomposable graphs (small p)")
    _add_data_options(exact)
    _add_options(exact, "delta", "phi_mode", "tau", "graph_prior", "r",
                 "top_k", "out_dir")

    count = subs.add_parser("count", help="count decomposable graphs on p "
                                          "vertices")
    _add_options(count, "p", "out_dir")

    sim = subs.add_parser("simulate", help="draw a dataset from a known graph")
    _add_options(sim, "p", "graph", "tau", "delta", "n", "seed", "out_dir")

    report = subs.add_parser("report", help="render top graphs and edge "
                                            "marginals from an existing CSV")
    _add_options(report, "table", "p", "top_k", "out_dir")

    rerun = subs.add_parser("rerun", help="repeat a run from its manifest")
    rerun.add_argument("manifest", help="manifest.txt from a previous run")
    rerun.add_argument("--out-dir", dest="out_dir", default="")
    return parser


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        if ns.command == "rerun":
            cfg = config_from_manifest(read_manifest(ns.manifest))
            if ns.out_dir:
                cfg = replace(cfg, out_dir=ns.out_dir)
        else:
            names = {f.name for f in dataclasses.fields(RunConfig)}
            cfg = RunConfig(**{k: v for k, v in vars(ns).items() if k in names})
        run_command(cfg)
    except (EbggmError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

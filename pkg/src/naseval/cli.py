"""Command-line experiment runner.

Subcommands: ``enumerate``, ``ground-truth``, ``search``, ``ws-rank``,
``sharing-amount`` and ``stats``.  Outputs go to
``$NASEVAL_OUTPUT_ROOT/<output_dir>`` (root defaults to ``./naseval-out``).

Every output file carries provenance (version, config hash, seeds,
wall-clock) outside its data section: a ``provenance`` entry in JSON-Lines
headers, leading ``#`` lines in CSV files and a ``meta`` object in JSON
files.  Data sections are byte-identical across reruns of one config.

Exit codes: 0 success, 1 usage error, 2 partial training failures,
3 I/O or parse errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, oracle, stats
from .config import ConfigError, ExperimentConfig, build_config, output_dir, provenance, resolve_table_path
from .oracle import BenchmarkTable, TableParseError
from .space import (
    CHAIN,
    ChainArch,
    SearchSpaceSpec,
    SpaceError,
    SpaceTooLargeError,
    canonical_encoding,
    chain_spec,
    decode,
    enumerate_space,
    shared_upstream,
)

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3

REFERENCE_TAU = {"rnn": -0.004, "cnn_3_node": 0.441, "cnn_4_node": 0.314, "cnn_5_node": 0.214,
                       "cnn_7_node": 0.195}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# -- output helpers -------------------------------------------------------


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path: Path, meta: dict, data) -> None:
    path.write_text(_json_text({"meta": meta, "data": data}), encoding="utf-8", newline="\n")


def csv_text(header: list[str], rows: list[list], meta: dict | None = None) -> str:
    buf = io.StringIO()
    for k in sorted(meta or {}):
        buf.write(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def write_csv(path: Path, header, rows, meta=None) -> None:
    path.write_text(csv_text(header, rows, meta), encoding="utf-8", newline="\n")


def data_section(path) -> str:
    """The reproducible part of an output file (provenance stripped)."""
    text = Path(path).read_text(encoding="utf-8")
    p = str(path)
    if p.endswith(".csv"):
        return "".join(l for l in text.splitlines(True) if not l.startswith("#"))
    if p.endswith(".jsonl"):
        lines = text.splitlines(True)
        head = json.loads(lines[0])
        head.get("header", {}).get("meta", {}).pop("provenance", None)
        return json.dumps(head, sort_keys=True) + "\n" + "".join(lines[1:])
    if p.endswith(".json"):
        return _json_text(json.loads(text)["data"])
    return text


def _write_table(table: BenchmarkTable, path: Path, prov: dict) -> None:
    table.meta["provenance"] = prov
    oracle.dump(table, path)
    del table.meta["provenance"]


def _load_table(cfg: ExperimentConfig) -> BenchmarkTable:
    ref = cfg.evaluator.get("table")
    if not ref:
        raise ConfigError("this command needs evaluator.table")
    return oracle.load(resolve_table_path(ref))


# -- enumerate ------------------------------------------------------------


def cmd_enumerate(args) -> int:
    spec = SearchSpaceSpec(CHAIN, args.node_count, tuple(args.ops.split(",")), args.limit)
    archs = enumerate_space(spec)
    header = {"header": dict(spec.to_dict(), metric=None, metric_kind="generic", metric_direction=None)}
    lines = [json.dumps(header)]
    lines += [json.dumps({"key": canonical_encoding(spec, a), "mean": None, "std": None, "runs": 0}) for a in archs]
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        out = Path(args.out) if args.out else output_dir(ExperimentConfig(), "enumerate") / "skeleton.jsonl"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8", newline="\n")
        print(f"wrote {len(archs)} architectures to {out}")
    return EXIT_OK


# -- ground truth ---------------------------------------------------------


def cmd_ground_truth(cfg: ExperimentConfig) -> int:
    from .supernet.training import rank_trajectory, standalone_sweep, table_from_sweep

    t0 = time.time()
    spec = cfg.search_space()
    if spec.family != CHAIN:
        raise ConfigError("ground-truth needs a chain-recurrent spec")
    sweep = standalone_sweep(spec, cfg.task_spec(), cfg.train_config(), cfg.seeds, workers=cfg.workers)
    table = table_from_sweep(sweep)
    pts, keys, ranks = rank_trajectory(spec, cfg.task_spec(), cfg.train_config(), cfg.seeds, sweep=sweep)
    out = output_dir(cfg, "ground-truth")
    prov = provenance(cfg, t0, time.time() - t0)
    _write_table(table, out / "ground_truth.jsonl", prov)
    rows = [[k] + [int(r) for r in ranks[i]] for i, k in enumerate(keys)]
    write_csv(out / "trajectory.csv", ["key"] + [f"epoch_{e}" for e in pts], rows, prov)
    tau_first_last = stats.kendall_tau(list(ranks[:, 0]), list(ranks[:, -1])).tau if len(keys) > 1 else None
    summary = {"records": len(table), "failed_records": len(table.failed), "failed_runs": sweep.failed_runs,
               "runs": len(sweep.runs), "checkpoints": pts, "tau_first_last_checkpoint": tau_first_last}
    write_json(out / "summary.json", prov, summary)
    (out / "config.json").write_text(_json_text(cfg.to_dict()), encoding="utf-8")
    print(json.dumps(summary))
    if sweep.failed_runs:
        print(f"warning: {sweep.failed_runs} of {len(sweep.runs)} training runs failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# -- search ---------------------------------------------------------------


def _run_sampler(name: str, sconf: dict, spec, evaluator, budget: int, seed: int, cfg: ExperimentConfig):
    from . import samplers

    if name == "random":
        return samplers.run_random(spec, evaluator, budget, seed)
    if name == "reinforce":
        return samplers.run_reinforce(spec, evaluator, budget, seed, samplers.ReinforceConfig(**sconf))
    if name == "predictor":
        return samplers.run_predictor(spec, evaluator, budget, seed, samplers.PredictorConfig(**sconf))
    if name == "relaxation":
        from .supernet.relaxed import RelaxationConfig

        sconf = dict(sconf)
        epochs = int(sconf.pop("epochs", 10))
        rc = RelaxationConfig(train=cfg.train_config(), **sconf)
        return samplers.run_relaxation(spec, cfg.task_spec(), epochs, seed, rc)
    raise ConfigError(f"unknown sampler {name!r}")


def _summary_rows(results_by: dict, table: BenchmarkTable | None, budget: int) -> list[dict]:
    rows = []
    rnd = results_by.get("random")
    for name, results in results_by.items():
        ok = [r for r in results if r.best_score is not None]
        row = {"sampler": name, "runs": len(results), "ok_runs": len(ok)}
        if ok:
            agg = stats.aggregate(ok)
            row.update(mean=agg["mean"], std=agg["std"], best=agg["best"])
        else:
            row.update(mean=None, std=None, best=None)
        if table is not None and ok:
            ranks = [table.rank(r.best_arch) for r in ok if r.best_arch in table]
            if ranks:
                row["best_rank"] = min(ranks)
                row["mean_best_rank"] = float(np.mean(ranks))
                row["p_surpass_random"] = float(np.mean([stats.p_surpass_random(r, table.r_max, budget) for r in ranks]))
                row["p_surpass_random_best_rank"] = stats.p_surpass_random(min(ranks), table.r_max, len(ranks))
        row["welch_p_vs_random"] = None
        if rnd is not None and name != "random" and len(ok) >= 2:
            rok = [r for r in rnd if r.best_score is not None]
            if len(rok) >= 2:
                a = stats.SampleSummary.of([r.best_score for r in ok])
                b = stats.SampleSummary.of([r.best_score for r in rok])
                row["welch_p_vs_random"] = stats.welch_t(a, b).p_two_sided
        rows.append(row)
    return rows


SUMMARY_COLUMNS = ["sampler", "runs", "ok_runs", "mean", "std", "best", "best_rank", "mean_best_rank",
                   "p_surpass_random", "p_surpass_random_best_rank", "welch_p_vs_random"]


def cmd_search(cfg: ExperimentConfig) -> int:
    from . import samplers

    t0 = time.time()
    spec = cfg.search_space()
    kind = cfg.evaluator.get("kind", samplers.TABLE_EXACT)
    table = _load_table(cfg) if (cfg.evaluator.get("table") or kind != samplers.SUPERNET_SHARED) else None
    if table is not None and table.spec.to_dict() != spec.to_dict():
        spec = table.spec
    shared_ev = None
    if kind == samplers.SUPERNET_SHARED:
        from .supernet.training import train_weight_sharing

        shared = train_weight_sharing(spec, cfg.task_spec(), cfg.train_config(), int(cfg.evaluator.get("ws_seed", 0)))
        shared_ev = samplers.SupernetEvaluator(shared, cfg.task_spec())
        shared_ev.table = table
    results_by: dict[str, list] = {}
    for entry in cfg.samplers:
        name = entry["name"]
        sconf = dict(entry.get("config", {}))
        results_by[name] = []
        for seed in cfg.seeds:
            ev = shared_ev if shared_ev is not None else samplers.make_evaluator(kind, table=table, seed=seed)
            results_by[name].append(_run_sampler(name, sconf, spec, ev, cfg.budget, seed, cfg))
    rows = _summary_rows(results_by, table, cfg.budget)
    out = output_dir(cfg, "search")
    prov = provenance(cfg, t0, time.time() - t0)
    data = {
        "evaluator": kind,
        "budget": cfg.budget,
        "results": {n: [r.to_dict() for r in rs] for n, rs in results_by.items()},
        "summary": rows,
    }
    write_json(out / "results.json", prov, data)
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, [[r.get(c) for c in SUMMARY_COLUMNS] for r in rows], prov)
    (out / "config.json").write_text(_json_text(cfg.to_dict()), encoding="utf-8")
    for r in rows:
        print(json.dumps(r))
    failed = sum(r["runs"] - r["ok_runs"] for r in rows)
    return EXIT_PARTIAL if failed else EXIT_OK


# -- weight-sharing rank disorder -----------------------------------------


def ws_rank_report(table: BenchmarkTable, task, train, seeds, spec=None) -> dict:
    """Weight-sharing runs scored against the table's ground truth."""
    from .supernet.training import train_weight_sharing, ws_ranking

    spec = spec or table.spec
    archs = [decode(spec, k) for k in table.keys]
    gt = {k: table.record(k).mean for k in table.keys}
    runs, failed = [], 0
    for seed in seeds:
        shared = train_weight_sharing(spec, task, train, seed, archs=archs)
        if shared.failed:
            failed += 1
            runs.append({"seed": seed, "failed": True})
            continue
        ranked = ws_ranking(shared, spec, task, archs=archs)
        ws = {e.key: e.loss for _, e in ranked}
        ws_rank = {e.key: i + 1 for i, (_, e) in enumerate(ranked)}
        runs.append({"seed": seed, "failed": False, "tau": stats.kendall_tau(ws, gt).tau, "ws_rank": ws_rank,
                     "ws_loss": ws})
    ok = [r for r in runs if not r["failed"]]
    taus = [r["tau"] for r in ok]
    report = {"runs": runs, "failed_runs": failed, "n_architectures": len(archs)}
    if ok:
        mean = float(np.mean(taus))
        report["tau_mean"] = mean
        report["tau_std"] = float(np.std(taus, ddof=1)) if len(taus) > 1 else 0.0
        best = max(ok, key=lambda r: (r["tau"], -r["seed"]))
        worst = min(ok, key=lambda r: (r["tau"], r["seed"]))
        avg = min(ok, key=lambda r: (abs(r["tau"] - mean), r["seed"]))
        report["labels"] = {"best": best["seed"], "worst": worst["seed"], "average": avg["seed"]}
        if len(ok) > 1:
            pair = [stats.kendall_tau(a["ws_loss"], b["ws_loss"]).tau for i, a in enumerate(ok) for b in ok[i + 1:]]
            report["ws_vs_ws_tau_mean"] = float(np.mean(pair))
            report["ws_vs_ws_tau_std"] = float(np.std(pair, ddof=1)) if len(pair) > 1 else 0.0
    return report


def cmd_ws_rank(cfg: ExperimentConfig) -> int:
    t0 = time.time()
    table = _load_table(cfg)
    report = ws_rank_report(table, cfg.task_spec(), cfg.train_config(), cfg.seeds)
    out = output_dir(cfg, "ws-rank")
    prov = provenance(cfg, t0, time.time() - t0)
    rows = []
    for label in ("best", "worst", "average"):
        seed = report.get("labels", {}).get(label)
        run = next((r for r in report["runs"] if r["seed"] == seed and not r["failed"]), None)
        if run is None:
            continue
        for k in table.ranked_keys:
            g, w = table.rank(k), run["ws_rank"][k]
            rows.append([label, seed, k, g, w, abs(g - w)])
    write_csv(out / "rank_disorder.csv", ["run", "seed", "key", "gt_rank", "ws_rank", "abs_delta"], rows, prov)
    data = {k: v for k, v in report.items() if k != "runs"}
    data["runs"] = [{"seed": r["seed"], "failed": r["failed"], "tau": r.get("tau")} for r in report["runs"]]
    data["reference_tau"] = REFERENCE_TAU
    write_json(out / "ws_tau.json", prov, data)
    (out / "config.json").write_text(_json_text(cfg.to_dict()), encoding="utf-8")
    print(json.dumps({k: data.get(k) for k in ("tau_mean", "tau_std", "labels", "failed_runs")}))
    return EXIT_PARTIAL if report["failed_runs"] else EXIT_OK


# -- amount of sharing ----------------------------------------------------


def sharing_variants(spec: SearchSpaceSpec, prefix) -> list[ChainArch]:
    """Architectures whose first ``n-1`` decisions equal ``prefix``; the last node varies."""
    n = spec.node_count
    if len(prefix) != n - 1:
        raise ConfigError(f"prefix must fix {n - 1} nodes, got {len(prefix)}")
    fixed = tuple((int(p), spec.ops.index(o) if isinstance(o, str) else int(o)) for p, o in prefix)
    return [ChainArch(fixed + ((p, o),)) for p in range(n) for o in range(len(spec.ops))]


def sharing_amount_report(spec, task, train, prefix, gt_seeds, ws_seeds, workers: int = 1) -> dict:
    from .supernet.training import standalone_sweep, train_weight_sharing, ws_ranking

    archs = sharing_variants(spec, prefix)
    n = spec.node_count
    keys = [canonical_encoding(spec, a) for a in archs]
    count = {k: shared_upstream(a, n) for k, a in zip(keys, archs)}
    sweep = standalone_sweep(spec, task, train, gt_seeds, archs=archs, workers=workers)
    gt = sweep.mean_valid_ppl()
    gt_rank = {k: i + 1 for i, k in enumerate(sorted(keys, key=lambda k: (gt[k], k)))}
    groups = sorted(set(count.values()))
    per_run, ws_ranks = [], []
    for seed in ws_seeds:
        shared = train_weight_sharing(spec, task, train, seed, archs=archs)
        if shared.failed:
            continue
        ranked = ws_ranking(shared, spec, task, archs=archs)
        ws = {e.key: e.loss for _, e in ranked}
        ws_ranks.append({e.key: i + 1 for i, (_, e) in enumerate(ranked)})
        row = {"seed": seed, "tau_all": _safe_tau(ws, gt)}
        for c in groups:
            ks = [k for k in keys if count[k] == c]
            row[f"tau_shared_{c}"] = _safe_tau({k: ws[k] for k in ks}, {k: gt[k] for k in ks})
        per_run.append(row)
    group_rows = []
    for c in groups:
        vals = [r[f"tau_shared_{c}"] for r in per_run if r[f"tau_shared_{c}"] is not None]
        group_rows.append({"shared_matrices": c, "n_architectures": sum(v == c for v in count.values()),
                           "tau_mean": float(np.mean(vals)) if vals else None,
                           "tau_std": float(np.std(vals, ddof=1)) if len(vals) > 1 else None})
    scatter = [{"key": k, "shared_matrices": count[k], "gt_ppl": gt[k], "gt_rank": gt_rank[k],
                "ws_rank_mean": float(np.mean([w[k] for w in ws_ranks])) if ws_ranks else None} for k in keys]
    return {"keys": keys, "groups": group_rows, "runs": per_run, "scatter": scatter,
            "failed_runs": sweep.failed_runs + len(ws_seeds) - len(per_run)}


def _safe_tau(a, b):
    try:
        return stats.kendall_tau(a, b).tau
    except stats.StatsError:
        return None


def cmd_sharing_amount(cfg: ExperimentConfig) -> int:
    t0 = time.time()
    spec = cfg.search_space()
    report = sharing_amount_report(spec, cfg.task_spec(), cfg.train_config(), cfg.prefix, cfg.gt_seeds, cfg.seeds,
                                   cfg.workers)
    out = output_dir(cfg, "sharing-amount")
    prov = provenance(cfg, t0, time.time() - t0)
    write_json(out / "sharing_tau.json", prov, report)
    write_csv(out / "sharing_groups.csv", ["shared_matrices", "n_architectures", "tau_mean", "tau_std"],
              [[g[c] for c in ("shared_matrices", "n_architectures", "tau_mean", "tau_std")] for g in report["groups"]],
              prov)
    write_csv(out / "sharing_scatter.csv", ["key", "shared_matrices", "gt_ppl", "gt_rank", "ws_rank_mean"],
              [[s[c] for c in ("key", "shared_matrices", "gt_ppl", "gt_rank", "ws_rank_mean")] for s in report["scatter"]],
              prov)
    (out / "config.json").write_text(_json_text(cfg.to_dict()), encoding="utf-8")
    print(json.dumps(report["groups"]))
    return EXIT_PARTIAL if report["failed_runs"] else EXIT_OK


# -- stats ----------------------------------------------------------------


def _summary_arg(text: str) -> stats.SampleSummary:
    try:
        m, s, n = text.split(",")
        return stats.SampleSummary(float(m), float(s), int(n))
    except ValueError as exc:
        raise UsageError(f"expected mean,std,n; got {text!r} ({exc})") from None


def _read_ranking(path: str):
    """A benchmark table (ranked by its metric) or a text file with one key per line, best first."""
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    first = text.lstrip()[:1]
    if first == "{":
        return list(oracle.load(p).ranked_keys)
    keys = [l.strip() for l in text.splitlines() if l.strip() and not l.startswith("#")]
    return keys


def cmd_stats(args) -> int:
    if args.stat == "psr":
        value = stats.p_surpass_random(stats.RankQuery(args.rank, args.total, args.budget))
        out = {"p_surpass_random": value, "rank": args.rank, "total": args.total, "budget": args.budget}
    elif args.stat == "welch":
        res = stats.welch_t(_summary_arg(args.a), _summary_arg(args.b))
        out = {"t": res.t if math.isfinite(res.t) else str(res.t), "df": res.df, "p": res.p_two_sided}
    else:
        a, b = _read_ranking(args.a), _read_ranking(args.b)
        out = stats.kendall_tau(a, b).to_dict()
    print(json.dumps(out))
    return EXIT_OK


# -- entry point ----------------------------------------------------------


def _add_config_args(p):
    p.add_argument("--preset", help="named preset (see README)")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--budget", type=int)
    p.add_argument("--table", help="benchmark table path or bundled:<name>")
    p.add_argument("--evaluator", choices=["table-exact", "table-noisy", "supernet-shared"])
    p.add_argument("--samplers", help="comma-separated sampler names")
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", help="output directory below the output root")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, e.g. train.epochs=10 (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="naseval", description="Search-phase evaluation harness for architecture search.")
    ap.add_argument("--version", action="version", version=f"naseval {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("enumerate", help="write a table skeleton listing every architecture")
    p.add_argument("--node-count", type=int, default=2)
    p.add_argument("--ops", default="identity,sigmoid,tanh,relu")
    p.add_argument("--limit", type=int, default=100_000, help="enumeration limit")
    p.add_argument("--out", help="output path ('-' for stdout)")

    for name, help_ in [("ground-truth", "train every architecture standalone; table + rank trajectory"),
                        ("search", "run samplers over seeds; results JSON + summary CSV"),
                        ("ws-rank", "weight-sharing rank disorder against a ground-truth table"),
                        ("sharing-amount", "rank disorder grouped by the number of shared matrices")]:
        _add_config_args(sub.add_parser(name, help=help_))

    p = sub.add_parser("stats", help="compute a statistic directly")
    ss = p.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    q = ss.add_parser("psr", help="probability to surpass random search")
    q.add_argument("--rank", type=int, required=True)
    q.add_argument("--total", type=int, required=True)
    q.add_argument("--budget", type=int, required=True)
    q = ss.add_parser("welch", help="Welch t-test from mean,std,n summaries")
    q.add_argument("--a", required=True)
    q.add_argument("--b", required=True)
    q = ss.add_parser("tau", help="Kendall tau between two ranking files")
    q.add_argument("a")
    q.add_argument("b")
    return ap


def _config_from_args(args) -> ExperimentConfig:
    over = {
        "seeds": [int(s) for s in args.seeds.split(",")] if args.seeds else None,
        "budget": args.budget,
        "workers": args.workers,
        "output_dir": args.out_dir,
    }
    if args.table or args.evaluator:
        over["evaluator"] = {k: v for k, v in (("table", args.table), ("kind", args.evaluator)) if v}
    if args.samplers:
        over["samplers"] = [{"name": n} for n in args.samplers.split(",")]
    return build_config(args.preset, args.config, over, args.set)


COMMANDS = {"ground-truth": cmd_ground_truth, "search": cmd_search, "ws-rank": cmd_ws_rank,
            "sharing-amount": cmd_sharing_amount}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "enumerate":
            return cmd_enumerate(args)
        if args.command == "stats":
            return cmd_stats(args)
        return COMMANDS[args.command](_config_from_args(args))
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except SpaceTooLargeError as exc:
        print(f"naseval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SpaceError, stats.StatsError, TypeError) as exc:
        print(f"naseval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, TableParseError, oracle.OracleError, json.JSONDecodeError) as exc:
        print(f"naseval: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

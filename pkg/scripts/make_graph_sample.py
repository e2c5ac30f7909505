"""Regenerate the bundled synthetic graph-cnn sample table.

The rows follow the tabular native format (7 vertices, at most 9 edges, ops
conv3x3 / conv1x1 / max3x3 on internal vertices) but the accuracies are
synthetic: an additive model of op counts and depth plus Gaussian noise.
It exists to exercise graph-cnn loading, sampling and search; it is not
measured data.

    python scripts/make_graph_sample.py [--rows 300] [--out src/naseval/data/graph_sample.jsonl]
"""

import argparse

import numpy as np

from naseval import oracle
from naseval import rng as nrng
from naseval.space import GRAPH, GRAPH_OP_NAMES, GraphArch, InvalidArchitectureError, SearchSpaceSpec, canonical_encoding

VERTICES, MAX_EDGES = 7, 9
OP_EFFECT = {"conv3x3": 0.006, "conv1x1": 0.002, "max3x3": -0.004}


def depth(adj: np.ndarray) -> int:
    longest = np.zeros(len(adj), dtype=int)
    for j in range(1, len(adj)):
        prev = np.flatnonzero(adj[:j, j])
        longest[j] = longest[prev].max() + 1 if len(prev) else 0
    return int(longest[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="src/naseval/data/graph_sample.jsonl")
    args = ap.parse_args(argv)

    spec = SearchSpaceSpec(GRAPH, VERTICES, GRAPH_OP_NAMES)
    g = nrng.stream(args.seed, nrng.TASK, 1)
    iu = np.triu_indices(VERTICES, 1)
    records = {}
    while len(records) < args.rows:
        adj = np.zeros((VERTICES, VERTICES), dtype=int)
        adj[iu] = g.random(len(iu[0])) < 0.35
        if adj.sum() > MAX_EDGES:
            continue
        ops = tuple(int(o) for o in g.integers(0, len(GRAPH_OP_NAMES), VERTICES - 2))
        try:
            key = canonical_encoding(spec, GraphArch(adj, ops))
        except InvalidArchitectureError:
            continue
        if key in records:
            continue
        score = 0.90 + sum(OP_EFFECT[GRAPH_OP_NAMES[o]] for o in ops) + 0.004 * min(depth(adj), 4)
        mean = float(np.clip(score + g.normal(0, 0.006), 0.5, 0.99))
        std = float(g.uniform(0.001, 0.004))
        records[key] = oracle.TabularRecord(key, round(mean, 6), round(std, 6), 3)
    meta = {"synthetic": True, "generator": "scripts/make_graph_sample.py", "seed": args.seed,
            "note": "synthetic accuracies in the tabular native format; not measured data"}
    table = oracle.BenchmarkTable(spec, "higher-better", records.values(), metric="valid_accuracy",
                                  metric_kind="accuracy", meta=meta)
    oracle.dump(table, args.out)
    print(f"wrote {len(table)} rows to {args.out}")


if __name__ == "__main__":
    main()

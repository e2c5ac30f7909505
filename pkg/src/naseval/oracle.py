"""Tabular ground-truth benchmarks.

File format (JSON Lines, UTF-8, LF)::

    {"header": {"family": ..., "node_count": ..., "ops": [...],
                "metric": "valid_ppl", "metric_kind": "perplexity",
                "metric_direction": "lower-better", "meta": {...}}}
    {"key": "0 tanh 1 relu", "mean": 6.91, "std": 0.04, "runs": 3}
    ...

The first line is the header; every other line is one record.  Records may
carry extra fields (e.g. ``test_mean``), which are preserved.  A record with
``"failed": true`` marks an architecture whose training never succeeded; it is
kept in the file but excluded from ranking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .space import Architecture, InvalidArchitectureError, SearchSpaceSpec, canonical_encoding, decode

HIGHER = "higher-better"
LOWER = "lower-better"
DIRECTIONS = (HIGHER, LOWER)

METRIC_RANGES = {
    "accuracy": (0.0, 1.0),
    "perplexity": (1.0, math.inf),
    "generic": (-math.inf, math.inf),
}


class OracleError(ValueError):
    pass


class TableParseError(OracleError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


class DuplicateKeyError(OracleError):
    def __init__(self, key: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate key {key!r}{where}")
        self.key = key


class EmptyTableError(OracleError):
    pass


class NotFoundError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


@dataclass(frozen=True)
class TabularRecord:
    key: str
    mean: float
    std: float
    runs: int
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise OracleError(f"record {self.key!r}: mean must be finite")
        if not (self.std >= 0 and math.isfinite(self.std)):
            raise OracleError(f"record {self.key!r}: std must be finite and >= 0, got {self.std}")
        if int(self.runs) < 1:
            raise OracleError(f"record {self.key!r}: runs must be >= 1, got {self.runs}")

    def to_dict(self) -> dict:
        d = {"key": self.key, "mean": self.mean, "std": self.std, "runs": self.runs}
        for k in sorted(self.extra):
            d[k] = self.extra[k]
        return d


def better(direction: str, a: float, b: float) -> bool:
    """True when score ``a`` is strictly better than ``b``."""
    return a > b if direction == HIGHER else a < b


class BenchmarkTable:
    """Immutable lookup table with precomputed ranks (1 = best).

    Ties in ``mean`` are broken by key text so that ranks are a permutation.
    """

    def __init__(
        self,
        spec: SearchSpaceSpec,
        metric_direction: str,
        records,
        metric: str = "score",
        metric_kind: str = "generic",
        failed=(),
        meta: dict | None = None,
    ):
        if metric_direction not in DIRECTIONS:
            raise OracleError(f"metric_direction must be one of {DIRECTIONS}, got {metric_direction!r}")
        if metric_kind not in METRIC_RANGES:
            raise OracleError(f"metric_kind must be one of {sorted(METRIC_RANGES)}, got {metric_kind!r}")
        self.spec = spec
        self.metric_direction = metric_direction
        self.metric = metric
        self.metric_kind = metric_kind
        self.meta = dict(meta or {})
        self._records: dict[str, TabularRecord] = {}
        lo, hi = METRIC_RANGES[metric_kind]
        for rec in records:
            if rec.key in self._records:
                raise DuplicateKeyError(rec.key)
            decode(spec, rec.key)
            if not lo <= rec.mean <= hi:
                raise OracleError(f"record {rec.key!r}: mean {rec.mean} outside the {metric_kind} range [{lo}, {hi}]")
            self._records[rec.key] = rec
        self.failed = tuple(sorted(failed))
        for k in self.failed:
            if k in self._records:
                raise DuplicateKeyError(k)
        sign = -1.0 if metric_direction == HIGHER else 1.0
        self._ranked = tuple(sorted(self._records, key=lambda k: (sign * self._records[k].mean, k)))
        self._rank = {k: i + 1 for i, k in enumerate(self._ranked)}
        self.keys = tuple(sorted(self._records))

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key) -> bool:
        return _key(self.spec, key) in self._records

    @property
    def r_max(self) -> int:
        return len(self._records)

    @property
    def ranked_keys(self) -> tuple[str, ...]:
        return self._ranked

    def record(self, key: str) -> TabularRecord:
        try:
            return self._records[key]
        except KeyError:
            note = " (all training runs failed)" if key in self.failed else ""
            raise NotFoundError(f"architecture {key!r} not in table{note}") from None

    def records(self) -> list[TabularRecord]:
        return [self._records[k] for k in self.keys]

    def rank(self, key: str) -> int:
        self.record(key)
        return self._rank[key]

    def header(self) -> dict:
        h = dict(self.spec.to_dict())
        h.update(metric=self.metric, metric_kind=self.metric_kind, metric_direction=self.metric_direction)
        if self.meta:
            h["meta"] = self.meta
        return h


def _key(spec, arch_or_key) -> str:
    if isinstance(arch_or_key, str):
        return arch_or_key
    return canonical_encoding(spec, arch_or_key)


def query(table: BenchmarkTable, arch: Architecture | str) -> TabularRecord:
    return table.record(_key(table.spec, arch))


def rank_of(table: BenchmarkTable, arch: Architecture | str) -> int:
    return table.rank(_key(table.spec, arch))


def best(table: BenchmarkTable) -> Architecture:
    if not len(table):
        raise EmptyTableError("table has no ranked records")
    return decode(table.spec, table.ranked_keys[0])


def space_stats(table: BenchmarkTable) -> dict:
    """Unweighted mean, population std and best of the record means."""
    if not len(table):
        raise EmptyTableError("space_stats of an empty table")
    means = np.array([r.mean for r in table.records()])
    return {
        "mean": float(means.mean()),
        "std": float(means.std()),
        "best": table.record(table.ranked_keys[0]).mean,
    }


def sample_noisy(table: BenchmarkTable, arch: Architecture | str, rng: np.random.Generator) -> float:
    """One simulated training run: ``Normal(mean, std)`` clamped to the metric range."""
    rec = query(table, arch)
    if rec.std == 0:
        return rec.mean
    lo, hi = METRIC_RANGES[table.metric_kind]
    return float(min(max(rng.normal(rec.mean, rec.std), lo), hi))


# -- serialization --------------------------------------------------------


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "), allow_nan=False)


def table_lines(table: BenchmarkTable) -> list[str]:
    """Header line followed by record lines (failed records last, in key order)."""
    lines = [_dumps({"header": table.header()})]
    lines.extend(_dumps(r.to_dict()) for r in table.records())
    lines.extend(_dumps({"key": k, "mean": None, "std": None, "runs": 0, "failed": True}) for k in table.failed)
    return lines


def dump(table: BenchmarkTable, path) -> None:
    Path(path).write_text("\n".join(table_lines(table)) + "\n", encoding="utf-8", newline="\n")


def load(path, spec: SearchSpaceSpec | None = None, enumeration_limit: int = 100_000) -> BenchmarkTable:
    path = Path(path)
    records: list[TabularRecord] = []
    failed: list[str] = []
    seen: dict[str, int] = {}
    header = None
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TableParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise TableParseError(path, lineno, "expected a JSON object")
            if header is None:
                if "header" not in obj:
                    raise TableParseError(path, lineno, "first line must be a header record")
                header = obj["header"]
                try:
                    file_spec = SearchSpaceSpec.from_dict(header, enumeration_limit)
                except (KeyError, TypeError, ValueError) as exc:
                    raise TableParseError(path, lineno, f"bad header: {exc}") from None
                if spec is not None and spec.to_dict() != file_spec.to_dict():
                    raise TableParseError(path, lineno, f"table spec {file_spec.to_dict()} != expected {spec.to_dict()}")
                spec = file_spec
                continue
            try:
                key = obj["key"]
                if not isinstance(key, str):
                    raise TypeError("key must be a string")
                if key in seen:
                    raise DuplicateKeyError(key, lineno)
                seen[key] = lineno
                try:
                    decode(spec, key)
                except InvalidArchitectureError as exc:
                    raise TableParseError(path, lineno, f"key invalid for spec: {exc}") from None
                if obj.get("failed"):
                    failed.append(key)
                    continue
                extra = {k: v for k, v in obj.items() if k not in ("key", "mean", "std", "runs")}
                records.append(TabularRecord(key, float(obj["mean"]), float(obj["std"]), int(obj["runs"]), extra))
            except (DuplicateKeyError, TableParseError):
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise TableParseError(path, lineno, f"bad record: {exc}") from None
    if header is None:
        raise TableParseError(path, 1, "empty file")
    try:
        return BenchmarkTable(
            spec,
            header.get("metric_direction", HIGHER),
            records,
            metric=header.get("metric", "score"),
            metric_kind=header.get("metric_kind", "generic"),
            failed=failed,
            meta=header.get("meta"),
        )
    except OracleError as exc:
        raise TableParseError(path, 1, str(exc)) from None

"""Architecture encodings and search-space definitions.

Two families are supported:

``chain-recurrent``
    A recurrent cell with ``n`` intermediate nodes.  Node 0 is the cell input;
    intermediate node ``i`` (1-based) reads exactly one predecessor in
    ``[0, i-1]`` and applies one operation.  An architecture is the list of
    ``(predecessor, op)`` decisions.

``graph-cnn``
    A tabular graph space: a strictly upper-triangular adjacency matrix over
    ``v`` vertices (first = input, last = output) plus one operation label per
    internal vertex.  Cardinality and sampling come from a loaded table.

Canonical text keys
-------------------
chain: ``"p1 op1 p2 op2 ..."``, e.g. ``"0 tanh 1 relu"``.

graph: adjacency rows as ``0``/``1`` strings joined by ``.``, then ``|``, then
the internal-vertex op names joined by ``,``, e.g. ``"011.001.000|conv3x3"``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

CHAIN = "chain-recurrent"
GRAPH = "graph-cnn"
FAMILIES = (CHAIN, GRAPH)

RECURRENT_OP_NAMES = ("identity", "sigmoid", "tanh", "relu")
GRAPH_OP_NAMES = ("conv3x3", "conv1x1", "max3x3")


class SpaceError(ValueError):
    pass


class UnsupportedFamilyError(SpaceError):
    pass


class SpaceTooLargeError(SpaceError):
    def __init__(self, cardinality: int, limit: int):
        super().__init__(f"search space has {cardinality} architectures, exceeding the enumeration limit {limit}")
        self.cardinality = cardinality
        self.limit = limit


class InvalidArchitectureError(SpaceError):
    pass


@dataclass(frozen=True)
class OpSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise SpaceError("operation set must not be empty")
        if any(not isinstance(n, str) or not n or any(c in n for c in " |,.") for n in names):
            raise SpaceError(f"invalid operation names {names!r}")
        if len(set(names)) != len(names):
            raise SpaceError(f"operation names must be unique, got {names!r}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidArchitectureError(f"unknown operation {name!r}; expected one of {self.names}") from None


RECURRENT_OPS = OpSet(RECURRENT_OP_NAMES)
GRAPH_OPS = OpSet(GRAPH_OP_NAMES)


@dataclass(frozen=True)
class SearchSpaceSpec:
    family: str = CHAIN
    node_count: int = 2
    ops: OpSet = RECURRENT_OPS
    enumeration_limit: int = 100_000

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedFamilyError(f"unknown family {self.family!r}")
        if isinstance(self.ops, (list, tuple)):
            object.__setattr__(self, "ops", OpSet(tuple(self.ops)))
        if int(self.node_count) < 1:
            raise SpaceError(f"node_count must be >= 1, got {self.node_count}")
        if int(self.enumeration_limit) < 1:
            raise SpaceError(f"enumeration_limit must be >= 1, got {self.enumeration_limit}")

    def to_dict(self) -> dict:
        return {"family": self.family, "node_count": self.node_count, "ops": list(self.ops.names)}

    @classmethod
    def from_dict(cls, d: dict, enumeration_limit: int = 100_000) -> "SearchSpaceSpec":
        return cls(d["family"], int(d["node_count"]), OpSet(tuple(d["ops"])), enumeration_limit)


def chain_spec(node_count: int = 2, ops: Sequence[str] = RECURRENT_OP_NAMES, enumeration_limit: int = 100_000):
    return SearchSpaceSpec(CHAIN, node_count, OpSet(tuple(ops)), enumeration_limit)


@dataclass(frozen=True)
class ChainArch:
    """Per-node ``(predecessor, op index)`` decisions, node 1 first."""

    decisions: tuple[tuple[int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "decisions", tuple((int(p), int(o)) for p, o in self.decisions))

    @property
    def preds(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.decisions)

    @property
    def ops(self) -> tuple[int, ...]:
        return tuple(o for _, o in self.decisions)

    def __len__(self):
        return len(self.decisions)


@dataclass(frozen=True)
class GraphArch:
    adjacency: tuple[tuple[int, ...], ...]
    ops: tuple[int, ...] = field(default=())

    def __post_init__(self):
        adj = tuple(tuple(int(bool(b)) for b in row) for row in np.asarray(self.adjacency).tolist())
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "ops", tuple(int(o) for o in self.ops))

    @property
    def num_vertices(self) -> int:
        return len(self.adjacency)


Architecture = Union[ChainArch, GraphArch]


def cardinality(spec: SearchSpaceSpec) -> int:
    """Number of chain architectures: ``n! * |ops|**n``."""
    if spec.family != CHAIN:
        raise UnsupportedFamilyError(
            f"cardinality formula only applies to {CHAIN!r}; {spec.family!r} sizes come from the loaded table"
        )
    n = spec.node_count
    return math.factorial(n) * len(spec.ops) ** n


def validate(spec: SearchSpaceSpec, arch: Architecture) -> None:
    if spec.family == CHAIN:
        _validate_chain(spec, arch)
    else:
        _validate_graph(spec, arch)


def is_valid(spec: SearchSpaceSpec, arch: Architecture) -> bool:
    try:
        validate(spec, arch)
    except InvalidArchitectureError:
        return False
    return True


def _validate_chain(spec, arch):
    if not isinstance(arch, ChainArch):
        raise InvalidArchitectureError(f"expected ChainArch for {CHAIN}, got {type(arch).__name__}")
    if len(arch.decisions) != spec.node_count:
        raise InvalidArchitectureError(f"expected {spec.node_count} decisions, got {len(arch.decisions)}")
    for i, (p, o) in enumerate(arch.decisions, start=1):
        if not 0 <= p <= i - 1:
            raise InvalidArchitectureError(f"node {i} predecessor {p} outside [0, {i - 1}]")
        if not 0 <= o < len(spec.ops):
            raise InvalidArchitectureError(f"node {i} op index {o} outside [0, {len(spec.ops) - 1}]")


def _reachable(adj: np.ndarray, start: int, forward: bool = True) -> np.ndarray:
    m = adj if forward else adj.T
    seen = np.zeros(len(adj), dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        u = frontier.pop()
        for w in np.flatnonzero(m[u]):
            if not seen[w]:
                seen[w] = True
                frontier.append(w)
    return seen


def _validate_graph(spec, arch):
    if not isinstance(arch, GraphArch):
        raise InvalidArchitectureError(f"expected GraphArch for {GRAPH}, got {type(arch).__name__}")
    v = arch.num_vertices
    if v < 2 or v > spec.node_count:
        raise InvalidArchitectureError(f"graph has {v} vertices; expected 2..{spec.node_count}")
    adj = np.array(arch.adjacency, dtype=np.int8)
    if adj.shape != (v, v):
        raise InvalidArchitectureError("adjacency matrix must be square")
    if np.any(np.tril(adj)):
        raise InvalidArchitectureError("adjacency must be strictly upper triangular")
    if len(arch.ops) != v - 2:
        raise InvalidArchitectureError(f"expected {v - 2} internal op labels, got {len(arch.ops)}")
    if any(not 0 <= o < len(spec.ops) for o in arch.ops):
        raise InvalidArchitectureError("op index out of range")
    from_input = _reachable(adj, 0)
    to_output = _reachable(adj, v - 1, forward=False)
    if not from_input[v - 1]:
        raise InvalidArchitectureError("output is not reachable from input")
    on_path = from_input & to_output
    if not on_path.all():
        dangling = [int(i) for i in np.flatnonzero(~on_path)]
        raise InvalidArchitectureError(f"vertices {dangling} are not on any input->output path")


def canonical_encoding(spec: SearchSpaceSpec, arch: Architecture) -> str:
    validate(spec, arch)
    names = spec.ops.names
    if spec.family == CHAIN:
        return " ".join(f"{p} {names[o]}" for p, o in arch.decisions)
    rows = ".".join("".join(str(b) for b in row) for row in arch.adjacency)
    return rows + "|" + ",".join(names[o] for o in arch.ops)


def decode(spec: SearchSpaceSpec, key: str) -> Architecture:
    """Inverse of :func:`canonical_encoding`; raises on malformed keys."""
    try:
        if spec.family == CHAIN:
            tokens = key.split(" ")
            if len(tokens) % 2:
                raise InvalidArchitectureError(f"odd token count in chain key {key!r}")
            arch = ChainArch(tuple((int(tokens[k]), spec.ops.index(tokens[k + 1])) for k in range(0, len(tokens), 2)))
        else:
            rows, _, ops = key.partition("|")
            if not _:
                raise InvalidArchitectureError(f"graph key {key!r} lacks the '|' separator")
            adj = [[int(c) for c in row] for row in rows.split(".")]
            if any(c not in (0, 1) for row in adj for c in row):
                raise InvalidArchitectureError(f"adjacency bits must be 0/1 in {key!r}")
            op_idx = tuple(spec.ops.index(name) for name in ops.split(",")) if ops else ()
            if any(len(row) != len(adj) for row in adj):
                raise InvalidArchitectureError(f"adjacency in {key!r} is not square")
            arch = GraphArch(tuple(map(tuple, adj)), op_idx)
    except InvalidArchitectureError:
        raise
    except (ValueError, IndexError) as exc:
        raise InvalidArchitectureError(f"cannot parse key {key!r}: {exc}") from None
    validate(spec, arch)
    if canonical_encoding(spec, arch) != key:
        raise InvalidArchitectureError(f"key {key!r} is not in canonical form")
    return arch


def enumerate_space(spec: SearchSpaceSpec) -> list[ChainArch]:
    """All chain architectures, sorted by canonical key."""
    size = cardinality(spec)
    if size > spec.enumeration_limit:
        raise SpaceTooLargeError(size, spec.enumeration_limit)
    per_node = [
        [(p, o) for p in range(i) for o in range(len(spec.ops))] for i in range(1, spec.node_count + 1)
    ]
    archs = [ChainArch(tuple(choice)) for choice in itertools.product(*per_node)]
    archs.sort(key=lambda a: canonical_encoding(spec, a))
    return archs




def sample_uniform(spec: SearchSpaceSpec, rng: np.random.Generator, table=None) -> Architecture:
    """Uniform draw over the space.

    Chain: for node ``i`` the predecessor is drawn from ``[0, i-1]`` and then
    the op from the op set, node by node.  Graph: uniform over the sorted keys
    of ``table``.
    """
    if spec.family == CHAIN:
        decisions = []
        for i in range(1, spec.node_count + 1):
            p = int(rng.integers(0, i))
            o = int(rng.integers(0, len(spec.ops)))
            decisions.append((p, o))
        return ChainArch(tuple(decisions))
    if table is None:
        raise SpaceError("graph-cnn sampling needs an attached benchmark table")
    keys = table.keys
    return decode(spec, keys[int(rng.integers(0, len(keys)))])


def mixture_probs(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("logits must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("logits must be finite")
    e = np.exp(x - x.max())
    return e / e.sum()


def active_edges(arch: ChainArch, node: int | None = None) -> frozenset[tuple[int, int]]:
    """Edges ``(target, predecessor)`` feeding the cell, or feeding ``node`` only.

    With ``node`` given the result is the chain of edges from ``node`` back to
    the input; ``active_edges(arch, 0)`` is empty.
    """
    if node is None:
        return frozenset((i, p) for i, p in enumerate(arch.preds, start=1))
    if not 0 <= node <= len(arch.decisions):
        raise InvalidArchitectureError(f"node {node} outside [0, {len(arch.decisions)}]")
    edges = set()
    while node > 0:
        p = arch.decisions[node - 1][0]
        edges.add((node, p))
        node = p
    return frozenset(edges)


def shared_upstream(arch: ChainArch, node: int) -> int:
    """Number of upstream edge matrices ``node`` reuses through its predecessor."""
    return len(active_edges(arch, arch.decisions[node - 1][0]))


def edge_index(target: int, pred: int) -> int:
    """Flat index of edge ``(target, pred)`` among ``n(n+1)/2`` supernet edges."""
    return target * (target - 1) // 2 + pred


def num_edges(node_count: int) -> int:
    return node_count * (node_count + 1) // 2


@dataclass
class RelaxationParams:
    """Continuous logits: ``alpha_op[i-1]`` over ops and ``alpha_edge[i-1]`` over the ``i`` predecessors."""

    alpha_op: list[np.ndarray]
    alpha_edge: list[np.ndarray]

    @classmethod
    def uniform(cls, spec: SearchSpaceSpec) -> "RelaxationParams":
        n = spec.node_count
        return cls([np.zeros(len(spec.ops)) for _ in range(n)], [np.zeros(i) for i in range(1, n + 1)])

    def op_probs(self) -> list[np.ndarray]:
        return [mixture_probs(a) for a in self.alpha_op]

    def edge_probs(self) -> list[np.ndarray]:
        return [mixture_probs(a) for a in self.alpha_edge]

    def copy(self) -> "RelaxationParams":
        return RelaxationParams([a.copy() for a in self.alpha_op], [a.copy() for a in self.alpha_edge])

    def discretize(self) -> tuple[ChainArch, list[str]]:
        """Per-slot argmax; ties go to the lowest index and are reported."""
        ties = []
        decisions = []
        for i, (ae, ao) in enumerate(zip(self.alpha_edge, self.alpha_op), start=1):
            p = int(np.argmax(ae))
            o = int(np.argmax(ao))
            if np.count_nonzero(ae == ae[p]) > 1:
                ties.append(f"node {i} predecessor")
            if np.count_nonzero(ao == ao[o]) > 1:
                ties.append(f"node {i} op")
            decisions.append((p, o))
        return ChainArch(tuple(decisions)), ties


def keys_of(spec: SearchSpaceSpec, archs: Iterable[Architecture]) -> list[str]:
    return [canonical_encoding(spec, a) for a in archs]

"""Search policies behind one evaluator interface.

Evaluators
----------
``table-exact``      the table mean of the architecture,
``table-noisy``      one simulated training run drawn from the record,
``supernet-shared``  validation perplexity under trained shared weights.

All samplers share :class:`_Tracker`, which enforces the evaluation budget
and keeps the audit history, so "with" and "without" weight sharing runs
differ only in the evaluator binding.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import oracle
from . import rng as _rng
from .oracle import HIGHER, LOWER, BenchmarkTable, better
from .space import (
    CHAIN,
    Architecture,
    ChainArch,
    SearchSpaceSpec,
    canonical_encoding,
    cardinality,
    decode,
    enumerate_space,
    mixture_probs,
    sample_uniform,
)

TABLE_EXACT = "table-exact"
TABLE_NOISY = "table-noisy"
SUPERNET_SHARED = "supernet-shared"


class BudgetExhausted(RuntimeError):
    pass


# -- evaluators -----------------------------------------------------------


class Evaluator:
    kind: str
    metric_direction: str
    table: BenchmarkTable | None = None

    def evaluate(self, spec: SearchSpaceSpec, arch: Architecture) -> float:
        raise NotImplementedError


class TableEvaluator(Evaluator):
    """Tabular oracle; ``noisy=True`` simulates one training run per query."""

    def __init__(self, table: BenchmarkTable, noisy: bool = False, seed: int = 0):
        self.table = table
        self.metric_direction = table.metric_direction
        self.kind = TABLE_NOISY if noisy else TABLE_EXACT
        self._rng = _rng.stream(seed, _rng.NOISE) if noisy else None

    def evaluate(self, spec, arch):
        if self._rng is None:
            return oracle.query(self.table, arch).mean
        return oracle.sample_noisy(self.table, arch, self._rng)


class SupernetEvaluator(Evaluator):
    """Validation perplexity with shared weights (lower is better); cached per key."""

    def __init__(self, shared, task, split: str = "valid"):
        from .supernet.task import make_splits

        self.shared = shared
        self.task = task
        self.kind = SUPERNET_SHARED
        self.metric_direction = LOWER
        self._data = make_splits(task).get(split)
        self._cache: dict[str, float] = {}

    def evaluate(self, spec, arch):
        from .supernet.model import evaluate

        key = canonical_encoding(spec, arch)
        if key not in self._cache:
            self._cache[key] = evaluate(arch, self.shared, self._data, spec).ppl
        return self._cache[key]


def make_evaluator(kind: str, table: BenchmarkTable | None = None, seed: int = 0, shared=None, task=None) -> Evaluator:
    if kind in (TABLE_EXACT, TABLE_NOISY):
        if table is None:
            raise ValueError(f"{kind} evaluator needs a table")
        return TableEvaluator(table, noisy=kind == TABLE_NOISY, seed=seed)
    if kind == SUPERNET_SHARED:
        if shared is None or task is None:
            raise ValueError("supernet-shared evaluator needs shared params and a task")
        return SupernetEvaluator(shared, task)
    raise ValueError(f"unknown evaluator kind {kind!r}")


# -- budget and results ---------------------------------------------------


@dataclass(frozen=True)
class SearchBudget:
    evaluations: int

    def __post_init__(self):
        if int(self.evaluations) < 1:
            raise ValueError(f"budget must be >= 1 evaluation, got {self.evaluations}")


def _budget(b) -> int:
    return b.evaluations if isinstance(b, SearchBudget) else SearchBudget(int(b)).evaluations


@dataclass
class SearchResult:
    sampler: str
    best_arch: str | None
    best_score: float | None
    history: list  # [step, key, score]
    seed: int
    evaluations_used: int
    budget: int
    direction: str
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["history"] = [list(h) for h in self.history]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        d = dict(d)
        d["history"] = [tuple(h) for h in d["history"]]
        return cls(**d)


class _Tracker:
    """Budget accounting and audit history shared by all samplers.

    An evaluation is the first query of an architecture; proposing an
    architecture that was already evaluated returns the recorded score
    without charging the budget.  ``done`` turns true when the budget is
    spent, every architecture of the space has been evaluated (unless
    ``stop_when_exhausted`` is off), or the sampler has made
    ``max_proposals`` proposals.
    """

    def __init__(self, spec: SearchSpaceSpec, evaluator: Evaluator, budget: int, stop_when_exhausted: bool = True):
        self.spec, self.evaluator, self.budget = spec, evaluator, budget
        self.stop_when_exhausted = stop_when_exhausted
        self.history: list[tuple[int, str, float]] = []
        self.scores: dict[str, float] = {}
        self.best_key: str | None = None
        self.best_score: float | None = None
        self.proposals = 0
        self.max_proposals = 10 * budget + 100
        self.space_size = len(evaluator.table) if evaluator.table is not None else cardinality(spec)

    @property
    def remaining(self) -> int:
        return self.budget - len(self.history)

    @property
    def done(self) -> bool:
        exhausted = self.stop_when_exhausted and len(self.scores) >= self.space_size
        return self.remaining <= 0 or exhausted or self.proposals >= self.max_proposals

    def __call__(self, arch: Architecture) -> float:
        key = canonical_encoding(self.spec, arch)
        self.proposals += 1
        if key in self.scores:
            return self.scores[key]
        if self.remaining <= 0:
            raise BudgetExhausted(f"evaluation budget of {self.budget} exhausted")
        score = float(self.evaluator.evaluate(self.spec, arch))
        self.scores[key] = score
        self.history.append((len(self.history), key, score))
        if math.isfinite(score) and (self.best_score is None or better(self.evaluator.metric_direction, score, self.best_score)):
            self.best_key, self.best_score = key, score
        return score

    def result(self, sampler: str, seed: int, **extra) -> SearchResult:
        extra.setdefault("proposals", self.proposals)
        return SearchResult(sampler, self.best_key, self.best_score, list(self.history), seed, len(self.history),
                            self.budget, self.evaluator.metric_direction, extra)


def _reward(direction: str, score: float) -> float:
    return score if direction == HIGHER else -score


# -- random ---------------------------------------------------------------


def run_random(spec: SearchSpaceSpec, evaluator: Evaluator, budget, seed: int) -> SearchResult:
    """Uniform draws until ``budget`` distinct architectures are evaluated; the best is returned."""
    track = _Tracker(spec, evaluator, _budget(budget))
    g = _rng.stream(seed, _rng.ARCH)
    while not track.done:
        track(sample_uniform(spec, g, table=evaluator.table))
    return track.result("random", seed)


# -- REINFORCE ------------------------------------------------------------


@dataclass(frozen=True)
class ReinforceConfig:
    learning_rate: float = 0.05
    baseline_decay: float = 0.9
    normalize: bool = True

    def __post_init__(self):
        if not (self.learning_rate >= 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be finite and >= 0")
        if not 0 <= self.baseline_decay < 1:
            raise ValueError("baseline_decay must be in [0, 1)")


class FactoredPolicy:
    """Independent categorical logits per decision: predecessor and op of every node."""

    def __init__(self, spec: SearchSpaceSpec):
        if spec.family != CHAIN:
            raise ValueError("the factored policy covers chain-recurrent spaces")
        self.spec = spec
        self.pred_logits = [np.zeros(i) for i in range(1, spec.node_count + 1)]
        self.op_logits = [np.zeros(len(spec.ops)) for _ in range(spec.node_count)]

    def slots(self) -> list[np.ndarray]:
        out = []
        for p, o in zip(self.pred_logits, self.op_logits):
            out += [p, o]
        return out

    def sample(self, g: np.random.Generator) -> ChainArch:
        choices = [int(g.choice(len(l), p=mixture_probs(l))) for l in self.slots()]
        return ChainArch(tuple(zip(choices[0::2], choices[1::2])))

    def prob(self, arch: ChainArch) -> float:
        choices = [c for d in arch.decisions for c in d]
        return float(np.prod([mixture_probs(l)[c] for l, c in zip(self.slots(), choices)]))

    def update(self, arch: ChainArch, advantage: float, lr: float) -> None:
        """``logits += lr * advantage * grad log pi(arch)``, slot by slot."""
        choices = [c for d in arch.decisions for c in d]
        for l, c in zip(self.slots(), choices):
            grad = -mixture_probs(l)
            grad[c] += 1.0
            l += lr * advantage * grad

    def to_dict(self) -> dict:
        return {"pred_logits": [l.tolist() for l in self.pred_logits], "op_logits": [l.tolist() for l in self.op_logits]}


def run_reinforce(spec: SearchSpaceSpec, evaluator: Evaluator, budget, seed: int,
                  config: ReinforceConfig | None = None) -> SearchResult:
    """Policy gradient with an exponential-moving-average reward baseline.

    The reward is the score (negated for lower-better metrics).  The
    baseline starts at the first reward.  With ``normalize`` the advantage
    is divided by the root of an EMA (same decay) of the squared deviation
    from the baseline, updated with the current deviation first; the step
    size then does not depend on the metric's scale and is bounded.  ``extra`` holds the final policy
    logits and the probability it assigns to the best-seen architecture.
    """
    config = config or ReinforceConfig()
    policy = FactoredPolicy(spec)
    # a learning policy keeps updating on recorded rewards after the space is exhausted
    track = _Tracker(spec, evaluator, _budget(budget), stop_when_exhausted=False)
    g = _rng.stream(seed, _rng.POLICY)
    baseline = None
    var = 0.0
    d = config.baseline_decay
    while not track.done:
        arch = policy.sample(g)
        r = _reward(evaluator.metric_direction, track(arch))
        if not math.isfinite(r):
            continue
        baseline = r if baseline is None else baseline
        adv = r - baseline
        var = d * var + (1 - d) * adv * adv
        if config.normalize:
            # var already includes this deviation, so |adv| <= 1 / sqrt(1 - d)
            adv = adv / math.sqrt(var) if var > 0 else 0.0
        policy.update(arch, adv, config.learning_rate)
        baseline = d * baseline + (1 - d) * r
    best_p = policy.prob(decode(spec, track.best_key)) if track.best_key else None
    return track.result("reinforce", seed, policy=policy.to_dict(), best_arch_prob=best_p)


def policy_from_dict(spec: SearchSpaceSpec, d: dict) -> FactoredPolicy:
    pol = FactoredPolicy(spec)
    pol.pred_logits = [np.array(l, dtype=float) for l in d["pred_logits"]]
    pol.op_logits = [np.array(l, dtype=float) for l in d["op_logits"]]
    return pol


# -- predictor ------------------------------------------------------------


@dataclass(frozen=True)
class PredictorConfig:
    pool_fraction: float = 0.2
    per_iteration: int = 1
    ridge: float = 1e-3
    target: str = "rank"

    def __post_init__(self):
        if not 0 < self.pool_fraction <= 1:
            raise ValueError("pool_fraction must be in (0, 1]")
        if self.per_iteration < 1 or not self.ridge > 0:
            raise ValueError("per_iteration must be >= 1 and ridge > 0")
        if self.target not in ("rank", "score"):
            raise ValueError("target must be 'rank' or 'score'")


def features(spec: SearchSpaceSpec, arch: Architecture) -> np.ndarray:
    """One-hot encoding of every decision.

    Chain: per node, one-hot predecessor then one-hot op.  Graph: a one-hot
    of the vertex count, the upper-triangular adjacency bits padded to
    ``node_count`` vertices, then a one-hot op per internal vertex slot.
    """
    K = len(spec.ops)
    if isinstance(arch, ChainArch):
        parts = []
        for i, (p, o) in enumerate(arch.decisions, start=1):
            v = np.zeros(i + K)
            v[p] = 1.0
            v[i + o] = 1.0
            parts.append(v)
        return np.concatenate(parts)
    N = spec.node_count
    v = arch.num_vertices
    size = np.zeros(N + 1)
    size[v] = 1.0
    adj = np.zeros((N, N))
    adj[:v, :v] = arch.adjacency
    ops = np.zeros((max(N - 2, 0), K))
    for k, o in enumerate(arch.ops):
        ops[k, o] = 1.0
    return np.concatenate([size, adj[np.triu_indices(N, 1)], ops.ravel()])


class RidgePredictor:
    """Least squares with ridge damping on centred features; intercept unpenalized."""

    def __init__(self, ridge: float = 1e-3):
        self.ridge = ridge
        self.w = None

    def fit(self, X, y) -> "RidgePredictor":
        X, y = np.asarray(X, float), np.asarray(y, float)
        self.x_mean, self.y_mean = X.mean(axis=0), y.mean()
        Xc = X - self.x_mean
        A = Xc.T @ Xc + self.ridge * np.eye(X.shape[1])
        self.w = np.linalg.solve(A, Xc.T @ (y - self.y_mean))
        return self

    def predict(self, X) -> np.ndarray:
        return (np.asarray(X, float) - self.x_mean) @ self.w + self.y_mean


def _ranks(y: np.ndarray) -> np.ndarray:
    """Average ranks (0-based, ties share the mean rank)."""
    order = np.argsort(y, kind="stable")
    r = np.empty(len(y))
    r[order] = np.arange(len(y), dtype=float)
    for v in np.unique(y):
        m = y == v
        r[m] = r[m].mean()
    return r


def _candidates(spec: SearchSpaceSpec, table: BenchmarkTable | None) -> list[str]:
    if table is not None:
        return list(table.keys)
    return [canonical_encoding(spec, a) for a in enumerate_space(spec)]


def run_predictor(spec: SearchSpaceSpec, evaluator: Evaluator, budget, seed: int,
                  config: PredictorConfig | None = None) -> SearchResult:
    """Pool / fit / propose loop with a linear predictor.

    The pool starts with ``pool_fraction`` of the space drawn uniformly
    without replacement (capped by the budget).  Each iteration fits the
    predictor to every observed score, ranks the unevaluated candidates and
    evaluates the ``per_iteration`` best predictions (ties by key).  The run
    ends when the budget or the candidates run out.

    With ``target="rank"`` the regression target is the rank of each
    observed reward among the observations (robust to outlying scores);
    ``"score"`` regresses on the reward itself.
    """
    config = config or PredictorConfig()
    track = _Tracker(spec, evaluator, _budget(budget))
    cands = _candidates(spec, evaluator.table)
    feats = {k: features(spec, decode(spec, k)) for k in cands}
    g = _rng.stream(seed, _rng.POOL)
    n_pool = min(track.budget, len(cands), max(1, int(round(config.pool_fraction * len(cands)))))
    observed: dict[str, float] = {}
    for i in g.choice(len(cands), size=n_pool, replace=False).tolist():
        observed[cands[i]] = track(decode(spec, cands[i]))
    iterations = 0
    while track.remaining:
        todo = [k for k in cands if k not in observed]
        if not todo:
            break
        ok = [k for k in observed if math.isfinite(observed[k])]
        if len(ok) >= 2:
            y = np.array([_reward(evaluator.metric_direction, observed[k]) for k in ok])
            if config.target == "rank":
                y = _ranks(y)
            model = RidgePredictor(config.ridge).fit([feats[k] for k in ok], y)
            pred = model.predict([feats[k] for k in todo])
        else:
            pred = np.zeros(len(todo))
        order = sorted(range(len(todo)), key=lambda j: (-pred[j], todo[j]))
        for j in order[:min(config.per_iteration, track.remaining)]:
            observed[todo[j]] = track(decode(spec, todo[j]))
        iterations += 1
    return track.result("predictor", seed, pool_size=n_pool, iterations=iterations)


# -- relaxation -----------------------------------------------------------


def run_relaxation(spec: SearchSpaceSpec, task, epochs: int, seed: int, config=None) -> SearchResult:
    """Continuous relaxation search for ``epochs``; the argmax is then trained standalone.

    ``best_score`` is the standalone validation perplexity of the chosen
    architecture (``None`` if the search or the final training diverged).
    Argmax ties are listed in ``extra["ties"]``.
    """
    from .supernet.relaxed import RelaxationConfig, search_relaxed
    from .supernet.training import train_standalone

    config = config or RelaxationConfig()
    res = search_relaxed(spec, task, epochs, seed, config)
    extra = {
        "epochs": epochs,
        "ties": res.ties,
        "alpha_op": [a.tolist() for a in res.alpha.alpha_op],
        "alpha_edge": [a.tolist() for a in res.alpha.alpha_edge],
        "failed": res.failed,
    }
    if res.failed:
        return SearchResult("relaxation", None, None, [], seed, 0, 1, LOWER, extra)
    key = canonical_encoding(spec, res.arch)
    ev = train_standalone(res.arch, task, config.train, seed, spec)
    if ev.failed:
        extra["failed"] = True
        return SearchResult("relaxation", key, None, [(0, key, None)], seed, 1, 1, LOWER, extra)
    return SearchResult("relaxation", key, ev.ppl, [(0, key, ev.ppl)], seed, 1, 1, LOWER, extra)


SAMPLERS = {"random": run_random, "reinforce": run_reinforce, "predictor": run_predictor}

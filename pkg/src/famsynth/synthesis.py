"""Abstraction-refinement synthesis loops.

Threshold synthesis partitions a family into satisfying and violating
members; max/min synthesis finds an optimal member; feasibility stops at the
first satisfying member.  All three share the same machinery: solve the
restricted quotient in both directions, classify or split, repeat.

Classification must respect the one-sidedness of value iteration (computed
values never exceed the true fixpoint).  The side that is exact is compared
literally; the other side gets a safety margin, and anything still
inconclusive at a singleton is decided with the exact rational chain solver,
so the final partition agrees with member-by-member checking.
"""

from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (
    SizeCapError,
    UndefinedRewardError,
    UnsupportedSpecError,
)
from .family import (
    REWARD,
    FamilyModel,
    Realisation,
    Specification,
    Subfamily,
    compare,
    instantiate,
)
from .engine import (
    DEFAULT_EPSILON,
    DEFAULT_MAX_ITER,
    CheckResult,
    Scheduler,
    solve_mc_exact,
    solve_prob,
    solve_reward,
)
from .quotient import (
    QuotientMDP,
    RestrictedQuotient,
    build_quotient,
    is_consistent,
    scheduler_to_realisations,
)

STRATEGIES = ("auto", "variance", "consistency")
QUEUES = ("fifo", "largest")


@dataclass
class RefinementConfig:
    """Tuning knobs for the refinement loop.

    ``workers`` > 1 solves several queued subfamilies concurrently; their
    results are applied in queue order, so the outcome matches a sequential
    run.
    """

    delta: float = 0.5
    strategy: str = "auto"
    queue: str = "fifo"
    epsilon: float = DEFAULT_EPSILON
    max_iter: int = DEFAULT_MAX_ITER
    margin: float = 1e-6
    subfamily_budget: int | None = None
    workers: int = 1

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.queue not in QUEUES:
            raise ValueError(f"queue must be one of {QUEUES}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class ScoreReport:
    """Split diagnostics: per-parameter scores, the per-value choice counts
    they were derived from, and the selected predicate."""

    variance: dict[int, int]
    consistency: dict[int, int]
    c_max: dict[int, dict[int, int]]
    c_min: dict[int, dict[int, int]]
    chosen_param: int
    chosen_values: tuple[int, ...]


@dataclass
class PhaseTimes:
    build: float = 0.0
    check: float = 0.0
    analyse: float = 0.0

    @property
    def total(self) -> float:
        return self.build + self.check + self.analyse


@dataclass
class SynthesisStats:
    iterations: int = 0
    solver_calls: int = 0
    exact_calls: int = 0
    singletons: int = 0
    times: PhaseTimes = field(default_factory=PhaseTimes)


@dataclass
class IterationRecord:
    index: int
    subfamily: dict[str, list[int]]
    size: int
    min_value: float | None
    max_value: float | None
    decision: str
    split_param: str | None
    best_value: float | None = None


@dataclass
class SynthesisOutcome:
    """Result of a synthesis run.

    Threshold mode fills the T/F/undefined buckets with disjoint subfamilies;
    max/min mode fills ``best`` and ``best_value``.
    """

    mode: str
    accepted: list[Subfamily] = field(default_factory=list)
    rejected: list[Subfamily] = field(default_factory=list)
    undefined: list[Subfamily] = field(default_factory=list)
    best: Realisation | None = None
    best_value: float | None = None
    stats: SynthesisStats = field(default_factory=SynthesisStats)
    trace: list[IterationRecord] | None = None

    @staticmethod
    def bucket_members(bucket: list[Subfamily]) -> set[tuple[int, ...]]:
        out: set[tuple[int, ...]] = set()
        for sub in bucket:
            out.update(r.values for r in sub.members())
        return out

    def member_counts(self) -> dict[str, int]:
        return {
            "T": sum(s.size for s in self.accepted),
            "F": sum(s.size for s in self.rejected),
            "undefined": sum(s.size for s in self.undefined),
        }


# ---------------------------------------------------------------------------
# Splitting strategy
# ---------------------------------------------------------------------------

def _gap(hi: float, lo: float) -> float:
    if math.isinf(hi) and math.isinf(lo):
        return 0.0
    return hi - lo


def _reachable_under(mdp, scheduler: Scheduler) -> set[int]:
    seen = {mdp.initial}
    queue = deque([mdp.initial])
    while queue:
        s = queue.popleft()
        for t, _ in mdp.actions[s][scheduler.choices[s]].dist:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    return seen


def important_states(res_min: CheckResult, res_max: CheckResult, delta: float,
                     restricted: RestrictedQuotient,
                     goal: frozenset[int]) -> frozenset[int]:
    """States whose min/max gap is at least ``delta`` times the gap at the
    initial state, restricted to states reachable under either extracted
    scheduler where the row still varies within the subfamily.

    A zero gap at the initial state yields the empty set (no split signal);
    goal states are skipped because scheduler choices there carry no
    information.
    """
    family = restricted.family
    sub = restricted.sub
    mdp = restricted.mdp
    gap0 = _gap(res_max.at_initial, res_min.at_initial)
    if gap0 <= 0.0:
        return frozenset()
    reach = _reachable_under(mdp, res_max.scheduler)
    reach |= _reachable_under(mdp, res_min.scheduler)
    out = set()
    for s in reach:
        if s in goal:
            continue
        if not any(len(sub.subsets[k]) > 1 for k in family.support(s)):
            continue
        gap = _gap(res_max.values[s], res_min.values[s])
        if delta == 0.0 or gap >= delta * gap0:
            out.add(s)
    return frozenset(out)


def extract_counts(scheduler: Scheduler, important: frozenset[int],
                   restricted: RestrictedQuotient) -> dict[int, dict[int, int]]:
    """Per parameter, how often the scheduler picks each domain value over the
    important states whose row mentions the parameter."""
    family = restricted.family
    counts = {k: {t: 0 for t in family.domains[k]}
              for k in range(family.n_params)}
    for s in important:
        action = scheduler.tags[s]
        for k, v in zip(action.params, action.values):
            counts[k][v] += 1
    return counts


def _variance_score(c_max: dict[int, int], c_min: dict[int, int]) -> int:
    return sum(abs(c_max[t] - c_min[t]) for t in c_max)


def _consistency_score(c_max: dict[int, int], c_min: dict[int, int]) -> int:
    def part(c: dict[int, int]) -> int:
        size = len([t for t in c if c[t] > 0]) - 1
        return size * max(c.values())

    return part(c_max) + part(c_min)


def select_predicate(c_max: dict[int, dict[int, int]],
                     c_min: dict[int, dict[int, int]],
                     sub: Subfamily, strategy: str,
                     family: FamilyModel) -> ScoreReport:
    """Pick the parameter with the best score and the half of its current
    subset with the largest max-minus-min choice counts.

    All ties break deterministically: parameter declaration order, then
    domain order.
    """
    splittable = [k for k in range(family.n_params)
                  if len(sub.subsets[k]) > 1]
    if not splittable:
        raise AssertionError("select_predicate requires a splittable parameter")
    variance = {k: _variance_score(c_max[k], c_min[k])
                for k in range(family.n_params)}
    consistency = {k: _consistency_score(c_max[k], c_min[k])
                   for k in range(family.n_params)}
    scores = variance if strategy == "variance" else consistency
    best = splittable[0]
    for k in splittable[1:]:
        if scores[k] > scores[best]:
            best = k
    current = sub.subsets[best]
    size = max(1, len(current) // 2)
    ranked = sorted(current, key=lambda t: -(c_max[best][t] - c_min[best][t]))
    chosen = set(ranked[:size])
    keep = tuple(t for t in current if t in chosen)
    return ScoreReport(variance=variance, consistency=consistency,
                       c_max=c_max, c_min=c_min, chosen_param=best,
                       chosen_values=keep)


# ---------------------------------------------------------------------------
# Shared loop plumbing
# ---------------------------------------------------------------------------

class _Loop:
    def __init__(self, family: FamilyModel, spec: Specification,
                 config: RefinementConfig, collect_trace: bool):
        self.family = family
        self.spec = spec
        self.config = config
        self.goal = family.label_states(spec.goal)
        self.stats = SynthesisStats()
        self.trace: list[IterationRecord] | None = [] if collect_trace else None
        t0 = time.perf_counter()
        self.quotient: QuotientMDP = build_quotient(family)
        self.stats.times.build += time.perf_counter() - t0
        self.queue: deque[Subfamily] = deque([Subfamily.full(family)])
        self.total = family.n_realisations

    def pop(self) -> Subfamily:
        if self.config.queue == "largest":
            best = max(range(len(self.queue)),
                       key=lambda i: self.queue[i].size)
            sub = self.queue[best]
            del self.queue[best]
            return sub
        return self.queue.popleft()

    def begin_iteration(self):
        self.stats.iterations += 1
        if self.config.subfamily_budget is not None and \
                self.stats.iterations > self.config.subfamily_budget:
            raise SizeCapError(
                f"subfamily budget of {self.config.subfamily_budget} exceeded")
        assert self.stats.iterations <= 2 * self.total - 1, \
            "refinement explored more subfamilies than the binary tree bound"

    def _solve_pure(self, sub: Subfamily):
        """Restrict and solve both directions; pure, safe to run in threads."""
        t0 = time.perf_counter()
        restricted = self.quotient.restrict(sub)
        t1 = time.perf_counter()
        cfg = self.config
        if self.spec.kind == REWARD:
            res_max = solve_reward(restricted.mdp, self.goal, "max",
                                   epsilon=cfg.epsilon, max_iter=cfg.max_iter)
            try:
                res_min = solve_reward(restricted.mdp, self.goal, "min",
                                       epsilon=cfg.epsilon,
                                       max_iter=cfg.max_iter)
            except UndefinedRewardError:
                res_min = None
        else:
            res_max = solve_prob(restricted.mdp, self.goal, "max",
                                 epsilon=cfg.epsilon, max_iter=cfg.max_iter)
            res_min = solve_prob(restricted.mdp, self.goal, "min",
                                 epsilon=cfg.epsilon, max_iter=cfg.max_iter)
        t2 = time.perf_counter()
        return restricted, res_max, res_min, t1 - t0, t2 - t1

    def _book(self, solved):
        restricted, res_max, res_min, build, check = solved
        self.stats.times.build += build
        self.stats.times.check += check
        self.stats.solver_calls += 2
        return restricted, res_max, res_min

    def solve_both(self, sub: Subfamily
                   ) -> tuple[RestrictedQuotient, CheckResult, CheckResult | None]:
        return self._book(self._solve_pure(sub))

    def pop_batch(self) -> list[Subfamily]:
        subs = [self.pop()]
        while self.queue and len(subs) < self.config.workers:
            subs.append(self.pop())
        return subs

    def solve_batch(self, subs: list[Subfamily]):
        """Solve a batch, concurrently when configured; bookkeeping happens
        here in the caller's thread."""
        if self.config.workers <= 1 or len(subs) == 1:
            return [self.solve_both(sub) for sub in subs]
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            raw = list(pool.map(self._solve_pure, subs))
        return [self._book(r) for r in raw]

    def split(self, sub: Subfamily, restricted: RestrictedQuotient,
              res_max: CheckResult, res_min: CheckResult,
              mode: str) -> tuple[str, Subfamily, Subfamily]:
        strategy = self.config.strategy
        if strategy == "auto":
            strategy = "variance" if mode == "threshold" else "consistency"
        imp = important_states(res_min, res_max, self.config.delta,
                               restricted, self.goal)
        c_max = extract_counts(res_max.scheduler, imp, restricted)
        c_min = extract_counts(res_min.scheduler, imp, restricted)
        report = select_predicate(c_max, c_min, sub, strategy, self.family)
        top, bottom = sub.split(report.chosen_param, report.chosen_values)
        self.queue.append(top)
        self.queue.append(bottom)
        return (self.family.param_names[report.chosen_param], top, bottom)

    def record(self, sub: Subfamily, minv, maxv, decision: str,
               split_param: str | None, best_value: float | None = None):
        if self.trace is None:
            return
        self.trace.append(IterationRecord(
            index=self.stats.iterations,
            subfamily=sub.describe(self.family),
            size=sub.size,
            min_value=minv,
            max_value=maxv,
            decision=decision,
            split_param=split_param,
            best_value=best_value,
        ))

    def decide_exactly(self, sub: Subfamily) -> tuple[str, Fraction | None]:
        """Classify a singleton with the exact rational chain solver."""
        self.stats.exact_calls += 1
        member = sub.to_realisation()
        chain = instantiate(self.family, member)
        try:
            value, sat = solve_mc_exact(chain, self.spec)
        except UndefinedRewardError:
            return "undefined", None
        return ("accept" if sat else "reject"), value


def _classify_threshold(spec: Specification, minv: float, maxv: float,
                        margin: float) -> str:
    """Sound subfamily classification from one-sided min/max estimates.

    Accept/reject on the exact side uses the literal relation; the side that
    could be underestimated gets a margin pushed towards splitting.
    """
    lam = float(spec.threshold)
    if spec.kind == REWARD:
        if math.isinf(minv):
            return "undefined"  # no scheduler at all reaches almost surely
        if math.isinf(maxv):
            return "split"  # possibly mixes defined and undefined members
    upper = spec.relation in ("<", "<=")
    if upper:
        if compare(maxv, spec.relation, lam - margin):
            return "accept"
        if not compare(minv, spec.relation, lam):
            return "reject"
    else:
        if compare(minv, spec.relation, lam):
            return "accept"
        if not compare(maxv, spec.relation, lam - margin):
            return "reject"
    return "split"


def _run_threshold(family: FamilyModel, spec: Specification,
                   config: RefinementConfig, collect_trace: bool,
                   stop_on_accept: bool
                   ) -> tuple[SynthesisOutcome, Realisation | None]:
    if spec.objective_only:
        raise UnsupportedSpecError("threshold synthesis needs a threshold")
    loop = _Loop(family, spec, config, collect_trace)
    outcome = SynthesisOutcome(mode="threshold", trace=loop.trace,
                               stats=loop.stats)
    first: Realisation | None = None
    while loop.queue and first is None:
        batch = loop.pop_batch()
        solved = loop.solve_batch(batch)
        for sub, (restricted, res_max, res_min) in zip(batch, solved):
            loop.begin_iteration()
            t0 = time.perf_counter()
            minv = res_min.at_initial if res_min is not None else math.inf
            maxv = res_max.at_initial
            decision = _classify_threshold(spec, minv, maxv, config.margin)
            if sub.is_singleton:
                loop.stats.singletons += 1
                if decision == "split":
                    decision, _ = loop.decide_exactly(sub)
            split_param = None
            if decision == "accept":
                outcome.accepted.append(sub)
                if stop_on_accept and first is None:
                    first = next(sub.members())
            elif decision == "reject":
                outcome.rejected.append(sub)
            elif decision == "undefined":
                outcome.undefined.append(sub)
            else:
                split_param, _, _ = loop.split(sub, restricted, res_max,
                                               res_min, "threshold")
            loop.stats.times.analyse += time.perf_counter() - t0
            loop.record(sub, minv, maxv, decision, split_param)
            if first is not None:
                break
    return outcome, first


def threshold_synthesis(family: FamilyModel, spec: Specification,
                        config: RefinementConfig | None = None, *,
                        collect_trace: bool = False) -> SynthesisOutcome:
    """Partition the family into satisfying (T) and violating (F) members.

    Members whose expected reward is undefined land in a third bucket.
    """
    outcome, _ = _run_threshold(family, spec, config or RefinementConfig(),
                                collect_trace, stop_on_accept=False)
    return outcome


def feasibility(family: FamilyModel, spec: Specification,
                config: RefinementConfig | None = None, *,
                collect_trace: bool = False) -> Realisation | None:
    """First satisfying member found by the refinement loop, if any."""
    _, first = _run_threshold(family, spec, config or RefinementConfig(),
                              collect_trace, stop_on_accept=True)
    return first


def _optimise(family: FamilyModel, spec: Specification,
              config: RefinementConfig, collect_trace: bool
              ) -> SynthesisOutcome:
    if not spec.objective_only:
        raise UnsupportedSpecError("max/min synthesis needs an objective-only "
                                   "specification")
    maximize = spec.direction == "max"
    loop = _Loop(family, spec, config, collect_trace)
    outcome = SynthesisOutcome(mode=spec.direction, trace=loop.trace,
                               stats=loop.stats)
    certified = -math.inf if maximize else math.inf
    bound = certified  # may run ahead of `certified` via inconsistent minima
    best: Realisation | None = None

    def better(a: float, b: float) -> bool:
        return a > b if maximize else a < b

    while loop.queue:
        batch = loop.pop_batch()
        solved = loop.solve_batch(batch)
        for sub, (restricted, res_max, res_min) in zip(batch, solved):
            loop.begin_iteration()
            t0 = time.perf_counter()
            maxv = res_max.at_initial
            minv = res_min.at_initial if res_min is not None else math.inf
            lead_res = res_max if maximize else res_min
            leadv = maxv if maximize else minv
            otherv = minv if maximize else maxv
            if sub.is_singleton:
                loop.stats.singletons += 1
            split_param = None
            if res_min is None:
                # No scheduler reaches the goal almost surely: every member
                # of this subfamily has an undefined reward.
                decision = "discard-undefined"
                loop.stats.times.analyse += time.perf_counter() - t0
                loop.record(sub, minv, maxv, decision, None,
                            best_value=bound if not math.isinf(bound)
                            else None)
                continue
            decision = "discard"
            # Prune when the subfamily cannot strictly beat what is
            # certified, or sits strictly below a value some member of
            # another subfamily is known to reach.
            prunable = (not better(leadv, certified)) or better(bound, leadv)
            if not prunable:
                if math.isinf(leadv):
                    # Reward query where the leading scheduler escapes the
                    # goal: an undefined member may hide here, narrow down.
                    if sub.is_singleton:
                        decision = "discard-undefined"
                    else:
                        decision = "split"
                else:
                    consistent, _ = is_consistent(restricted,
                                                  lead_res.scheduler)
                    if consistent:
                        witness = scheduler_to_realisations(
                            restricted, lead_res.scheduler)
                        best = next(witness.members())
                        certified = leadv
                        if better(certified, bound):
                            bound = certified
                        decision = "improve"
                    else:
                        if not math.isinf(otherv) and better(otherv, bound):
                            bound = otherv
                        decision = "split"
            if decision == "split":
                split_param, _, _ = loop.split(sub, restricted, res_max,
                                               res_min, spec.direction)
            loop.stats.times.analyse += time.perf_counter() - t0
            loop.record(sub, minv, maxv, decision, split_param,
                        best_value=bound if not math.isinf(bound) else None)
    if best is None:
        raise UndefinedRewardError(
            "no member of the family has a defined value for the objective")
    outcome.best = best
    outcome.best_value = certified
    return outcome


def max_synthesis(family: FamilyModel, spec: Specification,
                  config: RefinementConfig | None = None, *,
                  collect_trace: bool = False) -> SynthesisOutcome:
    """Find a member maximising the objective (value and witness)."""
    if spec.direction != "max":
        raise UnsupportedSpecError("max_synthesis needs a *max objective")
    return _optimise(family, spec, config or RefinementConfig(),
                     collect_trace)


def min_synthesis(family: FamilyModel, spec: Specification,
                  config: RefinementConfig | None = None, *,
                  collect_trace: bool = False) -> SynthesisOutcome:
    """Find a member minimising the objective (value and witness)."""
    if spec.direction != "min":
        raise UnsupportedSpecError("min_synthesis needs a *min objective")
    return _optimise(family, spec, config or RefinementConfig(),
                     collect_trace)

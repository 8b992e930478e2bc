"""Sparse MC/MDP numeric core.

Qualitative graph analyses, min/max value iteration for reachability
probability and expected reward, memoryless deterministic scheduler
extraction, and an exact rational linear-system solver for chains (the
oracle used by the enumeration baseline and the test suite).

Value iteration runs Jacobi sweeps from below, so computed values never
exceed the true fixpoint; callers exploit that one-sidedness.  Scheduler
extraction must be attainment-aware: a plain argmax would happily pick a
value-preserving self-loop (every Dirac self-loop ties with the optimum at
the fixpoint), so maximising extraction only accepts optimal actions that
make progress towards already-ranked states.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .errors import (
    ModelError,
    NonConvergenceError,
    UndefinedRewardError,
)
from .family import (
    PROBABILITY,
    REWARD,
    ConcreteMC,
    Specification,
    compare,
    reachable_states,
)

DEFAULT_EPSILON = 1e-8
DEFAULT_MAX_ITER = 10 ** 6
TIE_SLACK = 1e-9


class MdpAction(NamedTuple):
    dist: tuple[tuple[int, float], ...]
    tag: object


@dataclass
class SparseMDP:
    """Per-state action lists with sparse float successor distributions."""

    n_states: int
    initial: int
    actions: list[list[MdpAction]]
    rewards: list[float] | None = None

    def validate(self):
        if not 0 <= self.initial < self.n_states:
            raise ModelError("initial state out of range", code="bad-initial")
        if len(self.actions) != self.n_states:
            raise ModelError("one action list per state required",
                             code="bad-row")
        for s, acts in enumerate(self.actions):
            if not acts:
                raise ModelError(f"state {s} has no action", code="bad-row")
            for dist, _ in acts:
                total = sum(p for _, p in dist)
                if abs(total - 1.0) > 1e-9:
                    raise ModelError(
                        f"action at state {s} sums to {total!r}",
                        code="row-sum")
        return self


@dataclass(frozen=True)
class Scheduler:
    """Memoryless deterministic choice: per state an action index + its tag."""

    choices: tuple[int, ...]
    tags: tuple[object, ...]


@dataclass(frozen=True)
class CheckResult:
    direction: str
    kind: str
    values: tuple[float, ...]
    scheduler: Scheduler
    at_initial: float


def mdp_from_mc(mc: ConcreteMC) -> SparseMDP:
    actions = [[MdpAction(tuple((t, float(p)) for t, p in mc.rows[s]), None)]
               for s in range(mc.n_states)]
    rewards = None
    if mc.rewards is not None:
        rewards = [float(r) for r in mc.rewards]
    return SparseMDP(mc.n_states, mc.initial, actions, rewards)


# ---------------------------------------------------------------------------
# Qualitative graph analyses.  Goal states are absorbing for all of them:
# reachability is about the first visit.
# ---------------------------------------------------------------------------

def prob0_exists(mdp: SparseMDP, goal: frozenset[int]) -> frozenset[int]:
    """States from which some scheduler reaches the goal with probability 0.

    Greatest fixpoint of "outside the goal, some action stays inside".
    """
    inside = set(range(mdp.n_states)) - set(goal)
    changed = True
    while changed:
        changed = False
        for s in sorted(inside):
            if not any(all(t in inside for t, _ in dist)
                       for dist, _ in mdp.actions[s]):
                inside.discard(s)
                changed = True
    return frozenset(inside)


def _backward_closure(mdp: SparseMDP, targets, skip: frozenset[int]) -> set[int]:
    """States with an action-path to ``targets`` that does not leave through
    ``skip`` states (their outgoing edges are ignored)."""
    rev: list[list[int]] = [[] for _ in range(mdp.n_states)]
    for s in range(mdp.n_states):
        if s in skip:
            continue
        for dist, _ in mdp.actions[s]:
            for t, _ in dist:
                rev[t].append(s)
    seen = set(targets)
    queue = deque(seen)
    while queue:
        t = queue.popleft()
        for s in rev[t]:
            if s not in seen:
                seen.add(s)
                queue.append(s)
    return seen


def prob1_forall(mdp: SparseMDP, goal: frozenset[int]) -> frozenset[int]:
    """States from which every scheduler reaches the goal with probability 1.

    Complement of "can reach a state from which the goal is avoidable".
    """
    avoidable = prob0_exists(mdp, goal)
    bad = _backward_closure(mdp, avoidable, skip=goal)
    return frozenset(range(mdp.n_states)) - bad


def prob0_forall(mdp: SparseMDP, goal: frozenset[int]) -> frozenset[int]:
    """States from which no scheduler can reach the goal at all."""
    reach = _backward_closure(mdp, goal, skip=frozenset())
    return frozenset(range(mdp.n_states)) - reach


def prob1_exists(mdp: SparseMDP, goal: frozenset[int]
                 ) -> tuple[frozenset[int], dict[int, int]]:
    """States with some almost-surely goal-reaching scheduler.

    Returns the set plus, for each non-goal member, a witness action that
    stays inside the set and makes progress; the witness doubles as the
    attractor scheduler used by maximising extraction.
    """
    universe = set(range(mdp.n_states))
    while True:
        value_set = set(goal) & universe
        choice: dict[int, int] = {}
        # Layered rounds: qualification is checked against the previous
        # layer, so each witness action points strictly closer to the goal.
        while True:
            frontier = frozenset(value_set)
            added = False
            for s in range(mdp.n_states):
                if s not in universe or s in frontier:
                    continue
                for ai, (dist, _) in enumerate(mdp.actions[s]):
                    if all(t in universe for t, _ in dist) and any(
                            t in frontier for t, _ in dist):
                        value_set.add(s)
                        choice[s] = ai
                        added = True
                        break
            if not added:
                break
        if value_set == universe:
            return frozenset(universe), choice
        universe = value_set


# ---------------------------------------------------------------------------
# Value iteration
# ---------------------------------------------------------------------------

def _sweep(actions, values, frozen, maximize, rewards=None):
    n = len(actions)
    new = list(values)
    delta = 0.0
    for s in range(n):
        if s in frozen:
            continue
        best = None
        for dist, _ in actions[s]:
            v = 0.0
            for t, p in dist:
                v += p * values[t]
            if best is None or (v > best if maximize else v < best):
                best = v
        if rewards is not None:
            best += rewards[s]
        d = abs(best - values[s])
        if d > delta:
            delta = d
        new[s] = best
    return new, delta


def _iterate(actions, values, frozen, maximize, epsilon, max_iter,
             rewards=None):
    for _ in range(max_iter):
        values, delta = _sweep(actions, values, frozen, maximize, rewards)
        if delta <= epsilon:
            return values
    raise NonConvergenceError(
        f"value iteration stopped after {max_iter} sweeps", residual=delta)


def _action_value(dist, values):
    v = 0.0
    for t, p in dist:
        v += p * values[t]
    return v


def _extract_plain(mdp, values, maximize):
    """Greedy choice per state, ties broken by lowest action index."""
    choices = []
    for s in range(mdp.n_states):
        acts = mdp.actions[s]
        vals = [_action_value(a.dist, values) for a in acts]
        best = max(vals) if maximize else min(vals)
        pick = 0
        for ai, v in enumerate(vals):
            within = (v >= best - TIE_SLACK if maximize
                      else v <= best + TIE_SLACK)
            if within:
                pick = ai
                break
        choices.append(pick)
    return choices


def _extract_max_prob(mdp, goal, values, pin1, attractor, pin0, epsilon):
    """Attainment-aware maximising extraction.

    Inside the probability-1 region the attractor witness is used; in the
    'maybe' region an action qualifies if it is optimal within slack *and*
    moves with positive probability towards an already-ranked state.  The
    progress slack is wider than the tie slack because values carry value
    iteration error.
    """
    n = mdp.n_states
    choices = [0] * n
    ranked = set(goal)
    for s, ai in attractor.items():
        choices[s] = ai
        ranked.add(s)
    undecided = [s for s in range(n)
                 if s not in ranked and s not in pin0 and s not in goal]
    slack = max(TIE_SLACK, 10.0 * epsilon)
    opts = {}
    sums = {}
    for s in undecided:
        per = [_action_value(dist, values) for dist, _ in mdp.actions[s]]
        sums[s] = per
        opts[s] = max(per)
    progressing = True
    while progressing and undecided:
        progressing = False
        remaining = []
        for s in undecided:
            found = None
            for ai, (dist, _) in enumerate(mdp.actions[s]):
                if sums[s][ai] >= opts[s] - slack and any(
                        t in ranked for t, _ in dist):
                    found = ai
                    break
            if found is None:
                remaining.append(s)
            else:
                choices[s] = found
                ranked.add(s)
                progressing = True
        undecided = remaining
    # Leftovers should not occur; fall back to the greedy choice.
    for s in undecided:
        best = max(sums[s])
        for ai, v in enumerate(sums[s]):
            if v >= best - TIE_SLACK:
                choices[s] = ai
                break
    return choices


def _result(mdp, direction, kind, values, choices) -> CheckResult:
    tags = tuple(mdp.actions[s][choices[s]].tag for s in range(mdp.n_states))
    sched = Scheduler(tuple(choices), tags)
    return CheckResult(direction, kind, tuple(values), sched,
                       values[mdp.initial])


def solve_prob(mdp: SparseMDP, goal: frozenset[int], direction: str, *,
               epsilon: float = DEFAULT_EPSILON,
               max_iter: int = DEFAULT_MAX_ITER) -> CheckResult:
    """Optimal reachability probabilities plus an attaining scheduler.

    Qualitative precomputation pins the direction's certain states to exact
    0/1 before iterating.
    """
    goal = frozenset(goal)
    if direction == "max":
        pin1, attractor = prob1_exists(mdp, goal)
        pin0 = prob0_forall(mdp, goal)
    elif direction == "min":
        pin1 = prob1_forall(mdp, goal)
        pin0 = prob0_exists(mdp, goal)
        attractor = None
    else:
        raise ValueError(f"direction must be max or min, got {direction!r}")
    values = [0.0] * mdp.n_states
    for s in pin1:
        values[s] = 1.0
    frozen = set(pin1) | set(pin0)
    values = _iterate(mdp.actions, values, frozen, direction == "max",
                      epsilon, max_iter)
    if direction == "max":
        choices = _extract_max_prob(mdp, goal, values, pin1, attractor, pin0,
                                    epsilon)
    else:
        choices = _extract_plain(mdp, values, maximize=False)
    return _result(mdp, direction, PROBABILITY, values, choices)


def solve_reward(mdp: SparseMDP, goal: frozenset[int], direction: str, *,
                 epsilon: float = DEFAULT_EPSILON,
                 max_iter: int = DEFAULT_MAX_ITER) -> CheckResult:
    """Optimal expected reward accumulated until the goal is first reached.

    States whose relevant reachability guarantee fails get the +inf sentinel:
    under ``max`` every state some scheduler steers away from the goal, under
    ``min`` every state no scheduler can reach almost surely.  A ``min`` query
    whose initial state is such a state raises, everything else compares.
    """
    goal = frozenset(goal)
    if mdp.rewards is None:
        raise ModelError("model carries no rewards", code="bad-reward")
    if direction == "max":
        return _solve_reward_max(mdp, goal, epsilon, max_iter)
    if direction == "min":
        return _solve_reward_min(mdp, goal, epsilon, max_iter)
    raise ValueError(f"direction must be max or min, got {direction!r}")


def _solve_reward_max(mdp, goal, epsilon, max_iter):
    sure = prob1_forall(mdp, goal)
    values = [math.inf] * mdp.n_states
    for s in sure:
        values[s] = 0.0
    frozen = (set(range(mdp.n_states)) - set(sure)) | set(goal)
    # Within the all-schedulers-sure region every action stays inside,
    # hence every policy is proper and iteration converges.
    values = _iterate(mdp.actions, values, frozen, True, epsilon, max_iter,
                      rewards=mdp.rewards)
    choices = [0] * mdp.n_states
    for s in sure:
        if s in goal:
            continue
        best = None
        pick = 0
        for ai, (dist, _) in enumerate(mdp.actions[s]):
            v = _action_value(dist, values)
            if best is None or v > best + TIE_SLACK:
                best = v
                pick = ai
        choices[s] = pick
    # Infinite states must witness the infinity: steer towards the region
    # where the goal is avoidable and stay inside it, so the induced chain
    # misses the goal with positive probability.
    avoid = prob0_exists(mdp, goal)
    for s in avoid:
        for ai, (dist, _) in enumerate(mdp.actions[s]):
            if all(t in avoid for t, _ in dist):
                choices[s] = ai
                break
    ranked = set(avoid)
    undecided = [s for s in range(mdp.n_states)
                 if s not in sure and s not in avoid]
    progressing = True
    while progressing and undecided:
        progressing = False
        remaining = []
        for s in undecided:
            found = None
            for ai, (dist, _) in enumerate(mdp.actions[s]):
                if any(t in ranked for t, _ in dist):
                    found = ai
                    break
            if found is None:
                remaining.append(s)
            else:
                choices[s] = found
                ranked.add(s)
                progressing = True
        undecided = remaining
    assert not undecided, "every unsure state can reach the avoidable region"
    return _result(mdp, "max", REWARD, values, choices)


def _scc_decompose(nodes, edges):
    """Kosaraju strongly connected components, deterministic order."""
    nodes = sorted(nodes)
    index = {s: i for i, s in enumerate(nodes)}
    order = []
    seen = set()
    for root in nodes:
        if root in seen:
            continue
        stack = [(root, iter(edges.get(root, ())))]
        seen.add(root)
        while stack:
            node, it = stack[-1]
            advanced = False
            for t in it:
                if t not in seen:
                    seen.add(t)
                    stack.append((t, iter(edges.get(t, ()))))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
    rev: dict[int, list[int]] = {}
    for s, ts in edges.items():
        for t in ts:
            rev.setdefault(t, []).append(s)
    comps = []
    assigned = set()
    for root in reversed(order):
        if root in assigned:
            continue
        comp = {root}
        queue = deque([root])
        assigned.add(root)
        while queue:
            s = queue.popleft()
            for t in rev.get(s, ()):
                if t in index and t not in assigned:
                    assigned.add(t)
                    comp.add(t)
                    queue.append(t)
        comps.append(comp)
    return comps


def _zero_reward_mecs(mdp, candidates, allowed):
    """Maximal end components of the sub-MDP on ``candidates`` using only
    allowed actions whose support stays inside the component."""
    result = []
    work = [set(candidates)]
    while work:
        comp = work.pop()
        while True:
            keep = {s for s in comp
                    if any(all(t in comp for t, _ in mdp.actions[s][ai].dist)
                           for ai in allowed[s])}
            if keep == comp:
                break
            comp = keep
        if not comp:
            continue
        edges = {}
        for s in comp:
            outs = set()
            for ai in allowed[s]:
                dist = mdp.actions[s][ai].dist
                if all(t in comp for t, _ in dist):
                    outs.update(t for t, _ in dist)
            edges[s] = sorted(outs)
        comps = _scc_decompose(comp, edges)
        if len(comps) == 1:
            result.append(comps[0])
        else:
            work.extend(comps)
    return result


def _solve_reward_min(mdp, goal, epsilon, max_iter):
    region, attractor = prob1_exists(mdp, goal)
    if mdp.initial not in region:
        raise UndefinedRewardError(
            "no scheduler reaches the goal almost surely from the initial "
            "state")
    n = mdp.n_states
    allowed = [[] for _ in range(n)]
    for s in region:
        if s in goal:
            continue
        for ai, (dist, _) in enumerate(mdp.actions[s]):
            if all(t in region for t, _ in dist):
                allowed[s].append(ai)
        assert allowed[s], "attractor witness must stay inside the region"

    # Zero-reward end components admit free loitering, which creates spurious
    # fixpoints below the true minimum; collapse them first.
    zero = {s for s in region
            if s not in goal and mdp.rewards[s] == 0.0 and allowed[s]}
    mecs = _zero_reward_mecs(mdp, zero, allowed)
    rep = {}
    mec_of = {}
    for mec in mecs:
        r = min(mec)
        for s in mec:
            rep[s] = r
            mec_of[s] = mec
    node = lambda s: rep.get(s, s)

    nodes = sorted({node(s) for s in region})
    node_actions: dict[int, list[tuple[int, int, tuple]]] = {v: [] for v in nodes}
    for s in sorted(region):
        if s in goal:
            continue
        mec = mec_of.get(s)
        for ai in allowed[s]:
            dist = mdp.actions[s][ai].dist
            if mec is not None and all(t in mec for t, _ in dist):
                continue  # internal to the collapsed component
            merged: dict[int, float] = {}
            for t, p in dist:
                u = node(t)
                merged[u] = merged.get(u, 0.0) + p
            node_actions[node(s)].append((s, ai, tuple(sorted(merged.items()))))

    values_n = {v: 0.0 for v in nodes}
    goal_nodes = {node(g) for g in goal if g in region}
    for _ in range(max_iter):
        delta = 0.0
        new = {}
        for v in nodes:
            if v in goal_nodes:
                new[v] = 0.0
                continue
            best = None
            for s, _, dist in node_actions[v]:
                val = mdp.rewards[s]
                for t, p in dist:
                    val += p * values_n[t]
                if best is None or val < best:
                    best = val
            d = abs(best - values_n[v])
            if d > delta:
                delta = d
            new[v] = best
        values_n = new
        if delta <= epsilon:
            break
    else:
        raise NonConvergenceError(
            f"value iteration stopped after {max_iter} sweeps",
            residual=delta)

    values = [math.inf] * n
    for s in region:
        values[s] = values_n[node(s)]

    choices = [0] * n
    exit_of: dict[int, tuple[int, int]] = {}
    for v in nodes:
        if v in goal_nodes or not node_actions[v]:
            continue
        best = None
        pick = None
        for s, ai, dist in node_actions[v]:
            val = mdp.rewards[s]
            for t, p in dist:
                val += p * values_n[t]
            if best is None or val < best - TIE_SLACK:
                best = val
                pick = (s, ai)
        exit_of[v] = pick
    for s in sorted(region):
        if s in goal:
            continue
        mec = mec_of.get(s)
        if mec is None:
            choices[s] = exit_of[node(s)][1]
    # Members of a collapsed component route towards its exit state using
    # internal actions, then the exit takes the chosen leaving action.
    for mec in mecs:
        exit_state, exit_action = exit_of[min(mec)]
        choices[exit_state] = exit_action
        ranked = {exit_state}
        pending = sorted(mec - ranked)
        while pending:
            progressed = False
            remaining = []
            for s in pending:
                found = None
                for ai in allowed[s]:
                    dist = mdp.actions[s][ai].dist
                    if all(t in mec for t, _ in dist) and any(
                            t in ranked for t, _ in dist):
                        found = ai
                        break
                if found is None:
                    remaining.append(s)
                else:
                    choices[s] = found
                    ranked.add(s)
                    progressed = True
            assert progressed, "end component must be internally connected"
            pending = remaining
    return _result(mdp, "min", REWARD, values, choices)


def solve_mc(mc: ConcreteMC, spec: Specification, *,
             epsilon: float = DEFAULT_EPSILON,
             max_iter: int = DEFAULT_MAX_ITER) -> tuple[float, bool | None]:
    """Check one chain with the floating engine.

    Returns the value at the initial state and, for threshold specs, whether
    ``value ~ threshold`` holds.
    """
    mdp = mdp_from_mc(mc)
    goal = mc.label_states(spec.goal)
    if spec.kind == PROBABILITY:
        res = solve_prob(mdp, goal, "max", epsilon=epsilon, max_iter=max_iter)
    else:
        res = solve_reward(mdp, goal, "min", epsilon=epsilon,
                           max_iter=max_iter)
    value = res.at_initial
    if spec.objective_only:
        return value, None
    return value, compare(value, spec.relation, float(spec.threshold))


def induced_chain(mdp: SparseMDP, scheduler: Scheduler) -> ConcreteMC:
    """The chain obtained by fixing the scheduler's choices.

    Float probabilities convert to exact rationals (binary floats are
    rationals), so the result feeds the exact oracle directly.
    """
    rows = []
    for s in range(mdp.n_states):
        dist = mdp.actions[s][scheduler.choices[s]].dist
        rows.append(tuple((t, Fraction(p)) for t, p in dist))
    rewards = None
    if mdp.rewards is not None:
        rewards = tuple(Fraction(r) for r in mdp.rewards)
    return ConcreteMC(mdp.n_states, mdp.initial, tuple(rows), rewards,
                      reachable_states(rows, mdp.initial), labels={})


# ---------------------------------------------------------------------------
# Exact rational oracle for chains (Gaussian elimination)
# ---------------------------------------------------------------------------

def _gauss_solve(matrix: list[list[Fraction]], rhs: list[Fraction]
                 ) -> list[Fraction]:
    n = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(matrix)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if a[r][col] != 0), None)
        if pivot is None:
            raise ModelError("singular linear system", code="singular")
        a[col], a[pivot] = a[pivot], a[col]
        inv = a[col][col]
        a[col] = [x / inv for x in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def exact_mc_probability(mc: ConcreteMC, goal: frozenset[int]
                         ) -> list[Fraction]:
    """Per-state probability of reaching ``goal``, as exact rationals."""
    goal = frozenset(goal)
    n = mc.n_states
    can_reach = set(goal)
    changed = True
    while changed:
        changed = False
        for s in range(n):
            if s in can_reach or s in goal:
                continue
            if any(t in can_reach for t, _ in mc.rows[s]):
                can_reach.add(s)
                changed = True
    unknown = sorted(s for s in can_reach if s not in goal)
    idx = {s: i for i, s in enumerate(unknown)}
    m = len(unknown)
    matrix = [[Fraction(0)] * m for _ in range(m)]
    rhs = [Fraction(0)] * m
    for s in unknown:
        i = idx[s]
        matrix[i][i] += 1
        for t, p in mc.rows[s]:
            if t in goal:
                rhs[i] += p
            elif t in idx:
                matrix[i][idx[t]] -= p
    sol = _gauss_solve(matrix, rhs) if m else []
    values = [Fraction(0)] * n
    for s in goal:
        values[s] = Fraction(1)
    for s, i in idx.items():
        values[s] = sol[i]
    return values


def exact_mc_reward(mc: ConcreteMC, goal: frozenset[int]
                    ) -> list[Fraction | None]:
    """Per-state expected reward until ``goal``; None where undefined."""
    if mc.rewards is None:
        raise ModelError("model carries no rewards", code="bad-reward")
    goal = frozenset(goal)
    prob = exact_mc_probability(mc, goal)
    defined = {s for s in range(mc.n_states) if prob[s] == 1}
    unknown = sorted(s for s in defined if s not in goal)
    idx = {s: i for i, s in enumerate(unknown)}
    m = len(unknown)
    matrix = [[Fraction(0)] * m for _ in range(m)]
    rhs = [Fraction(0)] * m
    for s in unknown:
        i = idx[s]
        matrix[i][i] += 1
        rhs[i] += mc.rewards[s]
        for t, p in mc.rows[s]:
            if t in idx:
                matrix[i][idx[t]] -= p
    sol = _gauss_solve(matrix, rhs) if m else []
    values: list[Fraction | None] = [None] * mc.n_states
    for s in goal:
        values[s] = Fraction(0)
    for s, i in idx.items():
        values[s] = sol[i]
    return values


def solve_mc_exact(mc: ConcreteMC, spec: Specification
                   ) -> tuple[Fraction, bool | None]:
    """Exact-rational twin of :func:`solve_mc`."""
    goal = mc.label_states(spec.goal)
    if spec.kind == PROBABILITY:
        value = exact_mc_probability(mc, goal)[mc.initial]
    else:
        value = exact_mc_reward(mc, goal)[mc.initial]
        if value is None:
            raise UndefinedRewardError(
                "goal not reached almost surely from the initial state")
    if spec.objective_only:
        return value, None
    return value, spec.satisfied(value)

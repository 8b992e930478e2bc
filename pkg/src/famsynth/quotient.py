"""Quotient MDP under forgetting, plus the all-in-one MDP.

The quotient keeps the family's state space and exposes, at every state, one
merged action per distinct successor distribution reachable by assigning the
parameters that occur in that state's row.  Each merged action is keyed by a
partial parameter assignment (its *signature*); signatures that induce the
same distribution are unified and represented by the lexicographically
smallest surviving signature.  Restricting to a subfamily filters signatures
without rebuilding anything; unification is redone per restriction so that
signatures of one distribution falling on different sides of a split each
keep their own copy.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .errors import ConsistencyError, SizeCapError
from .family import (
    FamilyModel,
    Realisation,
    Subfamily,
    all_realisations,
    instantiate,
)
from .engine import MdpAction, Scheduler, SparseMDP

ALL_IN_ONE_CAP = 100_000


@dataclass(frozen=True)
class MergedAction:
    """One quotient action: a partial assignment over the parameters in the
    state's row plus the concrete distribution it induces."""

    state: int
    params: tuple[int, ...]
    values: tuple[int, ...]
    dist: tuple[tuple[int, float], ...]
    dist_exact: tuple[tuple[int, Fraction], ...]

    def assignment(self) -> dict[int, int]:
        return dict(zip(self.params, self.values))


class QuotientMDP:
    """Merged-action quotient of a family; immutable after construction."""

    def __init__(self, family: FamilyModel):
        self.family = family
        self.supports: list[tuple[int, ...]] = []
        self.signatures: list[list[tuple[int, ...]]] = []
        self.signature_group: list[list[int]] = []
        self.dists_exact: list[list[tuple[tuple[int, Fraction], ...]]] = []
        self.dists_float: list[list[tuple[tuple[int, float], ...]]] = []
        for s in range(family.n_states):
            supp = family.support(s)
            self.supports.append(supp)
            sigs = list(product(*(family.domains[k] for k in supp)))
            groups: dict[tuple, int] = {}
            sig_group = []
            exact = []
            flt = []
            pos = {k: i for i, k in enumerate(supp)}
            for sig in sigs:
                merged: dict[int, Fraction] = {}
                for p, k in family.rows[s]:
                    succ = sig[pos[k]]
                    merged[succ] = merged.get(succ, Fraction(0)) + p
                key = tuple(sorted(merged.items()))
                gid = groups.get(key)
                if gid is None:
                    gid = len(exact)
                    groups[key] = gid
                    exact.append(key)
                    flt.append(tuple((t, float(p)) for t, p in key))
                sig_group.append(gid)
            self.signatures.append(sigs)
            self.signature_group.append(sig_group)
            self.dists_exact.append(exact)
            self.dists_float.append(flt)
        self._rewards_float = None
        if family.rewards is not None:
            self._rewards_float = [float(r) for r in family.rewards]

    @property
    def n_states(self) -> int:
        return self.family.n_states

    def action_counts(self) -> tuple[int, ...]:
        """Distinct merged actions per state for the full family."""
        return tuple(len(d) for d in self.dists_exact)

    @property
    def n_actions(self) -> int:
        return sum(self.action_counts())

    def restrict(self, sub: Subfamily) -> "RestrictedQuotient":
        """Expose only the merged actions whose signatures survive ``sub``.

        No distributions are recomputed; signatures are filtered and regrouped
        by distribution, keeping the lexicographically smallest survivor as
        each group's representative.
        """
        family = self.family
        actions: list[list[MdpAction]] = []
        for s in range(family.n_states):
            supp = self.supports[s]
            allowed = [frozenset(sub.subsets[k]) for k in supp]
            per_state: list[MdpAction] = []
            seen: set[int] = set()
            for i, sig in enumerate(self.signatures[s]):
                if any(v not in ok for v, ok in zip(sig, allowed)):
                    continue
                gid = self.signature_group[s][i]
                if gid in seen:
                    continue
                seen.add(gid)
                ma = MergedAction(
                    state=s, params=supp, values=sig,
                    dist=self.dists_float[s][gid],
                    dist_exact=self.dists_exact[s][gid])
                per_state.append(MdpAction(ma.dist, ma))
            actions.append(per_state)
        rewards = list(self._rewards_float) if self._rewards_float else None
        mdp = SparseMDP(family.n_states, family.initial, actions, rewards)
        return RestrictedQuotient(self, sub, mdp)


def build_quotient(family: FamilyModel) -> QuotientMDP:
    return QuotientMDP(family)


@dataclass
class RestrictedQuotient:
    quotient: QuotientMDP
    sub: Subfamily
    mdp: SparseMDP

    @property
    def family(self) -> FamilyModel:
        return self.quotient.family


def _reachable_choices(restricted: RestrictedQuotient, scheduler: Scheduler):
    """Walk the scheduler-induced chain from the initial state and collect the
    chosen value per parameter; stop at the first conflict."""
    mdp = restricted.mdp
    seen = {mdp.initial}
    queue = deque([mdp.initial])
    while queue:
        s = queue.popleft()
        for t, _ in mdp.actions[s][scheduler.choices[s]].dist:
            if t not in seen:
                seen.add(t)
                queue.append(t)
    chosen: dict[int, tuple[int, int]] = {}
    for s in sorted(seen):
        action: MergedAction = scheduler.tags[s]
        for k, v in zip(action.params, action.values):
            prev = chosen.get(k)
            if prev is None:
                chosen[k] = (v, s)
            elif prev[0] != v:
                return chosen, (k, prev[1], s)
    return chosen, None


def is_consistent(restricted: RestrictedQuotient, scheduler: Scheduler
                  ) -> tuple[bool, tuple[int, int, int] | None]:
    """Does the scheduler pick a single value per parameter over the states it
    actually reaches?  Returns a witness ``(param, state, state)`` if not."""
    _, conflict = _reachable_choices(restricted, scheduler)
    return conflict is None, conflict


def scheduler_to_realisations(restricted: RestrictedQuotient,
                              scheduler: Scheduler) -> Subfamily:
    """The subfamily a consistent scheduler corresponds to: parameters it
    fixes become singletons, untouched parameters keep their full subsets."""
    chosen, conflict = _reachable_choices(restricted, scheduler)
    if conflict is not None:
        k, s1, s2 = conflict
        name = restricted.family.param_names[k]
        raise ConsistencyError(
            f"scheduler picks conflicting values for {name} at states "
            f"{s1} and {s2}")
    subsets = tuple(
        (chosen[k][0],) if k in chosen else restricted.sub.subsets[k]
        for k in range(restricted.family.n_params))
    return Subfamily(subsets)


@dataclass
class AllInOneMDP:
    """Realisation-indexed product MDP: the fresh initial picks a member,
    afterwards each state carries that member's single action."""

    mdp: SparseMDP
    family: FamilyModel
    realisations: list[Realisation]
    state_info: list[tuple[int, int] | None]
    state_id: dict[tuple[int, int], int]

    def goal_ids(self, label: str) -> frozenset[int]:
        goal = self.family.label_states(label)
        return frozenset(i for i, info in enumerate(self.state_info)
                         if info is not None and info[0] in goal)

    def member_state(self, r_index: int) -> int:
        return self.state_id[(self.family.initial, r_index)]


def build_all_in_one(family: FamilyModel,
                     cap: int = ALL_IN_ONE_CAP) -> AllInOneMDP:
    """Build the reachable fragment of the all-in-one MDP.

    Its size is proportional to states times members, so a cap guards it.
    """
    weight = family.n_states * family.n_realisations
    if weight > cap:
        raise SizeCapError(
            f"all-in-one MDP needs {weight} state slots, cap is {cap}")
    realisations = list(all_realisations(family))
    chains = [instantiate(family, r) for r in realisations]
    state_info: list[tuple[int, int] | None] = [None]
    state_id: dict[tuple[int, int], int] = {}

    def intern(s: int, ri: int) -> int:
        key = (s, ri)
        idx = state_id.get(key)
        if idx is None:
            idx = len(state_info)
            state_id[key] = idx
            state_info.append(key)
        return idx

    actions: list[list[MdpAction]] = [[]]
    for ri in range(len(realisations)):
        target = intern(family.initial, ri)
        actions[0].append(MdpAction(((target, 1.0),), ri))
    frontier = 1
    while frontier < len(state_info):
        s, ri = state_info[frontier]
        dist = tuple((intern(t, ri), float(p)) for t, p in chains[ri].rows[s])
        actions.append([MdpAction(dist, ri)])
        frontier += 1
    rewards = None
    if family.rewards is not None:
        rewards = [0.0] + [float(family.rewards[info[0]])
                           for info in state_info[1:]]
    mdp = SparseMDP(len(state_info), 0, actions, rewards).validate()
    return AllInOneMDP(mdp, family, realisations, state_info, state_id)


def dump_quotient(quotient: QuotientMDP, sub: Subfamily | None = None) -> str:
    """Plain-text dump of the (restricted) quotient for inspection.

    One line per merged action: ``state <s> action <k=v,...> : t:p ...``.
    """
    family = quotient.family
    restricted = quotient.restrict(sub or Subfamily.full(family))
    lines = [f"states {family.n_states}", f"initial {family.initial}"]
    for s in range(family.n_states):
        for dist, ma in restricted.mdp.actions[s]:
            sig = ",".join(f"{family.param_names[k]}={v}"
                           for k, v in zip(ma.params, ma.values))
            succ = " ".join(f"{t}:{p}" for t, p in ma.dist_exact)
            lines.append(f"state {s} action {sig} : {succ}")
    return "\n".join(lines) + "\n"

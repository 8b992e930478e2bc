"""famsynth: synthesis over finite families of Markov chains.

Threshold, max/min and feasibility queries answered by quotient-MDP
abstraction refinement, with enumeration and all-in-one baselines and an
SMT-LIB2 exporter for cross-validation.
"""

from .errors import (
    ConsistencyError,
    FamsynthError,
    FormatError,
    InvalidRealisationError,
    InvalidSplitError,
    MalformedModelError,
    ModelError,
    NonConvergenceError,
    SizeCapError,
    UndefinedRewardError,
    UnsupportedSpecError,
)
from .family import (
    PROBABILITY,
    REWARD,
    ConcreteMC,
    FamilyModel,
    Realisation,
    Specification,
    Subfamily,
    all_realisations,
    instantiate,
    subfamily_split,
)
from .fmc import parse_family, parse_spec, serialize_family
from .engine import (
    CheckResult,
    Scheduler,
    SparseMDP,
    exact_mc_probability,
    exact_mc_reward,
    induced_chain,
    prob0_exists,
    prob1_forall,
    solve_mc,
    solve_mc_exact,
    solve_prob,
    solve_reward,
)
from .quotient import (
    AllInOneMDP,
    MergedAction,
    QuotientMDP,
    RestrictedQuotient,
    build_all_in_one,
    build_quotient,
    dump_quotient,
    is_consistent,
    scheduler_to_realisations,
)
from .synthesis import (
    RefinementConfig,
    ScoreReport,
    SynthesisOutcome,
    extract_counts,
    feasibility,
    important_states,
    max_synthesis,
    min_synthesis,
    select_predicate,
    threshold_synthesis,
)
from .baselines import (
    all_in_one_check,
    enumerate_consistent,
    one_by_one,
    random_family,
    random_spec,
)
from .smt import (
    SmtEncoding,
    decode_model,
    default_solver_command,
    encode_feasibility,
    run_solver,
)

__version__ = "0.1.0"

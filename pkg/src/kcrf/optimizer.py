"""Block-Jacobi damped Newton for the dual objective.

The parameter space splits into two orthogonal tied blocks: emission
coefficients (expanded over anchors) and the |Y| x |Y| transition table.
Each block is preconditioned with its own Hessian block; cross-block and
cross-position covariances are ignored.

Progress is measured by an upper bound on the improvement any change of a
block can still buy.  For a convex loss C plus (lam/2)||theta||^2, the
minimum over the block is at least the current value minus
||grad||^2 / (2 lam), where the gradient norm is taken in parameter space.
For the emission block, parameter-space norms are RKHS norms, so the
coefficient gradient g contributes ``g^T K^+ g`` with K the anchor Gram
matrix.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .chain import BLOCKS, EMISSION, TRANSITION
from .exceptions import InputError, NumericalError
from .lowrank import basis_from_factor, candidate_anchors, incomplete_cholesky
from .objective import DualObjective

logger = logging.getLogger(__name__)

MAX_HALVINGS = 20


@dataclass
class TrainState:
    basis: object
    iteration: int = 0
    objective_trace: list = field(default_factory=list)
    block_bounds: dict = field(default_factory=dict)
    converged: bool = False
    # bounds and objective at every evaluated iterate, in order
    bound_trace: list = field(default_factory=list)
    step_trace: list = field(default_factory=list)
    stalled: frozenset = frozenset()
    log_rows: list = field(default_factory=list)

    @property
    def objective(self):
        return self.objective_trace[-1]

    @property
    def total_bound(self):
        return float(sum(self.block_bounds.values()))


def improvement_bound(g_block, config, norm_sq=None):
    """Largest objective decrease still available by moving one block.

    ``norm_sq`` maps the block gradient to its squared parameter-space
    norm; the Euclidean norm is used when omitted.
    """
    g = np.asarray(g_block, dtype=float).ravel()
    sq = float(g @ g) if norm_sq is None else float(norm_sq(g))
    return 0.5 * config.sigma_squared * sq


def block_bounds(objective, report, config):
    return {
        EMISSION: improvement_bound(report.emission_grad, config,
                                    objective.gram_inverse_norm_sq),
        TRANSITION: improvement_bound(report.transition_grad, config),
    }


def _coeff_block(basis, block):
    if block == EMISSION:
        return basis.coeffs
    return basis.transition_coeffs.ravel()


def _newton_direction(H, g, damping):
    dim = len(g)
    if damping is None:
        damping = 1e-8 * np.trace(H) / dim
    A = H + damping * np.eye(dim)
    try:
        d = scipy.linalg.solve(A, -g, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        d = np.linalg.lstsq(A, -g, rcond=None)[0]
    if not np.isfinite(d).all():
        raise NumericalError(
            f"Newton system is singular (dim {dim}, damping {damping:g}, "
            f"trace {np.trace(H):g}); raise damping")
    return d


def newton_step(objective, state, config, blocks=BLOCKS, skip_below=None, evaluation=None):
    """One damped Newton step on ``blocks`` jointly, with backtracking.

    Blocks whose improvement bound is below ``skip_below`` (default: the
    gradient tolerance) are left alone.  The longest step in
    1, 1/2, ..., 2**-20 that strictly lowers the objective is taken; if none
    does, the coefficients stay put and the blocks are marked stalled.
    """
    basis = state.basis
    if evaluation is None:
        evaluation = objective.evaluate(basis.coeffs, basis.transition_coeffs)
    value, report, margs = evaluation
    bounds = block_bounds(objective, report, config)
    threshold = config.gradient_tolerance if skip_below is None else skip_below
    active = [b for b in blocks if bounds[b] >= threshold
              and not (b == EMISSION and objective.n_anchors == 0)]
    if not active:
        return state

    directions = {}
    for b in active:
        g = report.block(b)
        if b == EMISSION:
            V, H = objective.reduced_emission_hessian(margs)
            directions[b] = V @ _newton_direction(H, V.T @ g, config.damping)
        else:
            H = objective.hessian_block(b, margs)
            directions[b] = _newton_direction(H, g, config.damping)

    a_em, a_tr = basis.coeffs, basis.transition_coeffs
    d_em = directions.get(EMISSION, np.zeros_like(a_em))
    d_tr = directions.get(TRANSITION, np.zeros(a_tr.size)).reshape(a_tr.shape)
    accepted = None
    for k in range(MAX_HALVINGS + 1):
        step = 0.5 ** k
        cand_em, cand_tr = a_em + step * d_em, a_tr + step * d_tr
        v = objective.value(cand_em, cand_tr)
        if v < value:
            accepted = (step, v, cand_em, cand_tr)
            break

    if accepted is None:
        logger.debug("no decrease along Newton direction for %s", active)
        return replace(state, stalled=frozenset(active),
                       step_trace=state.step_trace + [{b: 0.0 for b in active}])
    step, v, cand_em, cand_tr = accepted
    return replace(
        state,
        basis=basis.with_coeffs(cand_em, cand_tr),
        iteration=state.iteration + 1,
        objective_trace=state.objective_trace + [v],
        step_trace=state.step_trace + [{b: step for b in active}],
        stalled=frozenset(),
    )


def prune_blocks(objective, state, config, threshold):
    """Blocks whose improvement bound reaches ``threshold``, plus all bounds."""
    basis = state.basis
    _, report, _ = objective.evaluate(basis.coeffs, basis.transition_coeffs)
    bounds = block_bounds(objective, report, config)
    retained = [b for b in BLOCKS if bounds[b] >= threshold]
    return retained, bounds


def initial_basis(data, spec, config, n_labels):
    """Anchor basis from greedy incomplete Cholesky over all candidates."""
    candidates = candidate_anchors(data, spec, n_labels)
    factor = incomplete_cholesky(candidates, spec, config.rank_budget,
                                 config.residual_tol, n_labels)
    return basis_from_factor(factor, candidates, n_labels)


LOG_HEADER = ("iteration", "objective", "grad_norm_emission", "grad_norm_transition",
              "bound_emission", "bound_transition", "step_emission", "step_transition")


def format_log_row(row):
    return "\t".join(f"{row[k]:.12g}" if isinstance(row[k], float) else str(row[k])
                     for k in LOG_HEADER)


def train(data, spec, config, schedule=None, *, n_labels=None, basis=None,
          blocks=None, objective=None, state=None, log=None):
    """Minimize the negative log-posterior by block-Jacobi Newton.

    ``basis`` defaults to an incomplete-Cholesky basis of size
    ``config.rank_budget``; coefficients start at zero unless ``state`` is
    given.  ``blocks`` restricts which blocks move (others stay frozen).
    Stops when the summed improvement bound of the moving blocks drops below
    ``config.gradient_tolerance``, when no step decreases the objective, or
    after ``config.max_iterations`` steps.  ``log`` receives one
    tab-separated line per evaluated iterate.
    """
    if not data:
        raise InputError("no training sequences")
    schedule = schedule or config.schedule
    if schedule not in ("joint-block-jacobi", "cyclic-subspace"):
        raise InputError(f"unknown schedule {schedule!r}")
    if n_labels is None:
        n_labels = int(max(s.labels.max() for s in data)) + 1
    spec.check_alphabet(n_labels)
    if state is None:
        if basis is None:
            basis = initial_basis(data, spec, config, n_labels)
        basis = basis.with_coeffs(np.zeros(basis.size), np.zeros((n_labels, n_labels)))
        state = TrainState(basis=basis)
    if objective is None:
        objective = DualObjective(data, state.basis, spec, config.sigma_squared)
    moving = list(BLOCKS if blocks is None else blocks)
    if log is not None:
        log.write("\t".join(LOG_HEADER) + "\n")

    cycle = 0
    stalled_since_progress = set()
    while True:
        b = state.basis
        evaluation = objective.evaluate(b.coeffs, b.transition_coeffs)
        value, report, _ = evaluation
        bounds = block_bounds(objective, report, config)
        if not state.objective_trace:
            state.objective_trace = [value]
        state.block_bounds = bounds
        state.bound_trace = state.bound_trace + [dict(bounds, objective=value)]
        last_steps = state.step_trace[-1] if state.step_trace else {}
        row = {
            "iteration": state.iteration, "objective": value,
            "grad_norm_emission": report.block_norms[EMISSION],
            "grad_norm_transition": report.block_norms[TRANSITION],
            "bound_emission": bounds[EMISSION], "bound_transition": bounds[TRANSITION],
            "step_emission": float(last_steps.get(EMISSION, 0.0)),
            "step_transition": float(last_steps.get(TRANSITION, 0.0)),
        }
        state.log_rows = state.log_rows + [row]
        if log is not None:
            log.write(format_log_row(row) + "\n")

        total = sum(bounds[k] for k in moving)
        if total < config.gradient_tolerance:
            state.converged = True
            break
        if not moving or state.iteration >= config.max_iterations:
            break
        if set(moving) <= stalled_since_progress:
            logger.info("line search stalled on all blocks; stopping")
            break

        if schedule == "joint-block-jacobi":
            step_blocks = moving
        else:
            step_blocks = [moving[cycle % len(moving)]]
            cycle += 1
        skip = config.gradient_tolerance / len(moving)
        before = state.iteration
        state = newton_step(objective, state, config, step_blocks,
                            skip_below=skip, evaluation=evaluation)
        if state.iteration > before:
            stalled_since_progress = set()
        else:
            # skipped (bound already tiny) or no decrease: both count as no progress
            stalled_since_progress |= set(step_blocks)
    return state

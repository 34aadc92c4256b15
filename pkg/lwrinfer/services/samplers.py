"""Gradient-free MCMC moves.

Random-walk Metropolis, affine-invariant stretch moves restricted to a
low-dimensional subspace, pCN on the complement of that subspace, and
replica-exchange swaps. Every move acts on flat state vectors described by a
StateLayout, so the same code drives toy targets and the traffic posterior.
"""

import logging
import signal
from multiprocessing import Pool
from typing import Callable, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np

from lwrinfer.cores.config import DEBUG_CACHES
from lwrinfer.schemas.sampler import RwmResult, Walker
from lwrinfer.utils.exceptions import ConfigurationError, NumericalError

logger = logging.getLogger(__name__)


class Target(Protocol):
    """Posterior split into an untempered likelihood and a prior"""

    def log_likelihood(self, state: np.ndarray) -> float:
        ...

    def log_prior(self, state: np.ndarray) -> float:
        ...


class KlProjector:
    """P = J J^T onto the leading KL modes and Q = I - P"""

    def __init__(self, eigvecs: np.ndarray):
        self.J = np.asarray(eigvecs, dtype=float)

    @property
    def dim(self) -> int:
        return self.J.shape[1]

    def project(self, x: np.ndarray) -> np.ndarray:
        return self.J @ (self.J.T @ x)

    def complement(self, x: np.ndarray) -> np.ndarray:
        return x - self.project(x)


class Block:
    """Contiguous slice of the state.

    Finite blocks move entirely with the stretch move. Gaussian blocks carry a
    KL projector and a prior noise sampler for pCN.
    """

    def __init__(
        self,
        name: str,
        size: int,
        projector: Optional[KlProjector] = None,
        noise: Optional[Callable[[np.random.Generator], np.ndarray]] = None,
    ):
        if (projector is None) != (noise is None):
            raise ConfigurationError(f"Block '{name}' needs both a projector and a noise sampler, or neither")
        self.name = name
        self.size = size
        self.projector = projector
        self.noise = noise
        self.start = 0

    @property
    def slice(self) -> slice:
        return slice(self.start, self.start + self.size)

    @property
    def is_gaussian(self) -> bool:
        return self.projector is not None

    @property
    def moved_dim(self) -> int:
        return self.projector.dim if self.is_gaussian else self.size


class StateLayout:
    """Ordered blocks making up a flat state vector"""

    def __init__(self, blocks: Sequence[Block]):
        offset = 0
        for block in blocks:
            block.start = offset
            offset += block.size
        self.blocks = list(blocks)
        self.dim = offset

    @property
    def moved_dim(self) -> int:
        """Dimension D of the subspace moved by the stretch move."""
        return sum(b.moved_dim for b in self.blocks)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise ConfigurationError(f"State layout has no block named '{name}'")

    def has_block(self, name: str) -> bool:
        return any(b.name == name for b in self.blocks)

    def project(self, v: np.ndarray) -> np.ndarray:
        """Apply the block-diagonal projector (identity on finite blocks)."""
        out = np.array(v, dtype=float)
        for b in self.blocks:
            if b.is_gaussian:
                out[b.slice] = b.projector.project(v[b.slice])
        return out


def evaluate(target: Target, state: np.ndarray) -> Tuple[float, float]:
    """Return (loglik, logprior); the likelihood is skipped outside the prior support."""
    logprior = float(target.log_prior(state))
    if logprior == -np.inf:
        return -np.inf, logprior
    loglik = float(target.log_likelihood(state))
    if np.isnan(loglik):
        loglik = -np.inf
    return loglik, logprior


def make_walker(target: Target, state: np.ndarray) -> Walker:
    loglik, logprior = evaluate(target, state)
    return Walker(state=state, loglik=loglik, logprior=logprior)


def verify_walker(target: Target, walker: Walker) -> None:
    """Re-evaluate a walker and fail if its caches are stale."""
    loglik, logprior = evaluate(target, walker.state)
    same = np.isclose(loglik, walker.loglik, rtol=1e-10, atol=1e-10) or loglik == walker.loglik
    if not same or not (np.isclose(logprior, walker.logprior, rtol=1e-10) or logprior == walker.logprior):
        raise NumericalError(
            f"Stale walker cache: loglik {walker.loglik} vs {loglik}, logprior {walker.logprior} vs {logprior}"
        )


_worker_target: Optional[Target] = None


def _install_target(target: Target) -> None:
    global _worker_target
    # the parent finishes the iteration on SIGINT
    signal.signal(signal.SIGINT, signal.SIG_IGN)
    _worker_target = target


def _worker_evaluate(state: np.ndarray) -> Tuple[float, float]:
    return evaluate(_worker_target, state)


class Evaluator:
    """Evaluates (loglik, logprior) for many states, serially or on a process pool"""

    def __init__(self, target: Target, workers: int = 1):
        self.target = target
        self.workers = max(1, int(workers))
        self._pool = None
        if self.workers > 1:
            self._pool = Pool(self.workers, initializer=_install_target, initargs=(target,))
            logger.info(f"Started evaluation pool with {self.workers} workers")

    @property
    def parallel(self) -> bool:
        return self._pool is not None

    def map(self, states: Iterable[np.ndarray]) -> List[Tuple[float, float]]:
        states = list(states)
        if self._pool is None:
            return [evaluate(self.target, s) for s in states]
        return self._pool.map(_worker_evaluate, states)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def rwm(
    logpost: Callable[[np.ndarray], float],
    init: np.ndarray,
    proposal_cov: np.ndarray,
    n_iters: int,
    rng: np.random.Generator,
) -> RwmResult:
    """Random-walk Metropolis with a Gaussian proposal."""
    x = np.array(init, dtype=float)
    chol = np.linalg.cholesky(np.atleast_2d(proposal_cov))
    current = float(logpost(x))
    chain = np.empty((n_iters, x.size))
    trace = np.empty(n_iters)
    accepted = 0
    for it in range(n_iters):
        proposal = x + chol @ rng.standard_normal(x.size)
        candidate = float(logpost(proposal))
        if np.log(rng.uniform()) < candidate - current:
            x, current = proposal, candidate
            accepted += 1
        chain[it] = x
        trace[it] = current
    rate = accepted / n_iters if n_iters else 0.0
    logger.debug(f"RWM finished {n_iters} iterations, acceptance {rate:.3f}")
    return RwmResult(chain=chain, log_target=trace, acceptance_rate=rate)


def stretch_z_from_uniform(a: float, u: float) -> float:
    """Inverse CDF of g(z) ~ 1/sqrt(z) on [1/a, a]."""
    lo = 1.0 / np.sqrt(a)
    return (lo + u * (np.sqrt(a) - lo)) ** 2


def stretch_z(a: float, rng: np.random.Generator) -> float:
    if a <= 1:
        raise ConfigurationError(f"Stretch scale a must exceed 1, got {a}")
    return stretch_z_from_uniform(a, rng.uniform())


def _stretch_proposal(
    walker: Walker, partner: Walker, layout: StateLayout, a: float, rng: np.random.Generator
) -> Tuple[Optional[np.ndarray], float]:
    z = stretch_z(a, rng)
    direction = layout.project(partner.state - walker.state)
    if not np.any(direction):
        return None, z
    return walker.state + (1.0 - z) * direction, z


def _stretch_accept(
    walker: Walker,
    proposal: np.ndarray,
    z: float,
    result: Tuple[float, float],
    layout: StateLayout,
    beta: float,
    rng: np.random.Generator,
) -> Tuple[Walker, bool]:
    loglik, logprior = result
    candidate = Walker(state=proposal, loglik=loglik, logprior=logprior)
    log_ratio = (layout.moved_dim - 1) * np.log(z) + candidate.log_posterior(beta) - walker.log_posterior(beta)
    if np.log(rng.uniform()) < log_ratio:
        return candidate, True
    return walker, False


def _pick_partner(i: int, pool: Sequence[int], rng: np.random.Generator) -> int:
    others = [j for j in pool if j != i]
    return others[int(rng.integers(len(others)))]


def aies_update(
    walkers: List[Walker],
    layout: StateLayout,
    evaluator: Evaluator,
    beta: float,
    a: float,
    rngs: Sequence[np.random.Generator],
) -> Tuple[List[Walker], int, int]:
    """Stretch-move sweep over an ensemble at one temperature.

    Serial evaluators update walkers one after another against the current
    ensemble. Parallel evaluators update each half against the frozen other half.
    Returns (walkers, attempted, accepted).
    """
    n = len(walkers)
    if n < 3:
        raise ConfigurationError(f"Stretch moves need at least 3 walkers, got {n}")
    walkers = list(walkers)
    attempted = 0
    accepted = 0

    if not evaluator.parallel:
        for i in range(n):
            j = _pick_partner(i, range(n), rngs[i])
            proposal, z = _stretch_proposal(walkers[i], walkers[j], layout, a, rngs[i])
            if proposal is None:
                continue
            result = evaluator.map([proposal])[0]
            walkers[i], ok = _stretch_accept(walkers[i], proposal, z, result, layout, beta, rngs[i])
            attempted += 1
            accepted += ok
        return walkers, attempted, accepted

    half = n // 2
    halves = [list(range(half)), list(range(half, n))]
    for active, frozen in (halves, halves[::-1]):
        pending = []
        for i in active:
            j = frozen[int(rngs[i].integers(len(frozen)))]
            proposal, z = _stretch_proposal(walkers[i], walkers[j], layout, a, rngs[i])
            if proposal is not None:
                pending.append((i, proposal, z))
        results = evaluator.map([p for _, p, _ in pending])
        for (i, proposal, z), result in zip(pending, results):
            walkers[i], ok = _stretch_accept(walkers[i], proposal, z, result, layout, beta, rngs[i])
            attempted += 1
            accepted += ok
    return walkers, attempted, accepted


def pcn_proposal(
    x: np.ndarray, block_name: str, omega: float, layout: StateLayout, rng: np.random.Generator
) -> np.ndarray:
    """x~ = P x + Q(sqrt(1 - omega^2) x + omega xi) on one Gaussian block."""
    if not 0 < omega <= 1:
        raise ConfigurationError(f"pCN step size must lie in (0, 1], got {omega}")
    block = layout.block(block_name)
    if not block.is_gaussian:
        raise ConfigurationError(f"pCN needs a Gaussian block, '{block_name}' is finite")
    xb = x[block.slice]
    xi = block.noise(rng)
    moved = np.sqrt(1.0 - omega ** 2) * xb + omega * xi
    new_block = block.projector.project(xb) + block.projector.complement(moved)
    proposal = np.array(x, dtype=float)
    proposal[block.slice] = new_block
    return proposal


def pcn_accept(
    walker: Walker, proposal: np.ndarray, result: Tuple[float, float], beta: float, rng: np.random.Generator
) -> Tuple[Walker, bool]:
    loglik, logprior = result
    if np.log(rng.uniform()) < beta * (loglik - walker.loglik):
        return Walker(state=proposal, loglik=loglik, logprior=logprior), True
    return walker, False


def pcn_update(
    walker: Walker,
    block_name: str,
    omega: float,
    layout: StateLayout,
    target: Target,
    beta: float,
    rng: np.random.Generator,
) -> Tuple[Walker, bool]:
    """Prior-reversible pCN move of one Gaussian block of one walker."""
    proposal = pcn_proposal(walker.state, block_name, omega, layout, rng)
    return pcn_accept(walker, proposal, evaluate(target, proposal), beta, rng)


def pcn_sweep(
    walkers: List[Walker],
    block_name: str,
    omega: float,
    layout: StateLayout,
    evaluator: Evaluator,
    beta: float,
    rngs: Sequence[np.random.Generator],
) -> Tuple[List[Walker], int]:
    """pCN move for every walker; walkers are independent so evaluation is batched."""
    proposals = [pcn_proposal(w.state, block_name, omega, layout, rngs[i]) for i, w in enumerate(walkers)]
    results = evaluator.map(proposals)
    updated = []
    accepted = 0
    for i, (w, p, r) in enumerate(zip(walkers, proposals, results)):
        new, ok = pcn_accept(w, p, r, beta, rngs[i])
        updated.append(new)
        accepted += ok
    return updated, accepted


def swap_log_ratio(loglik_i: float, loglik_j: float, beta_i: float, beta_j: float) -> float:
    if beta_i == beta_j or loglik_i == loglik_j:
        return 0.0
    return (beta_i - beta_j) * (loglik_j - loglik_i)


def pt_swap(
    walker_i: Walker, walker_j: Walker, beta_i: float, beta_j: float, rng: np.random.Generator
) -> Tuple[Walker, Walker, bool]:
    """Exchange the states of two temperatures; prior terms cancel."""
    log_ratio = swap_log_ratio(walker_i.loglik, walker_j.loglik, beta_i, beta_j)
    if np.log(rng.uniform()) < log_ratio:
        return walker_j, walker_i, True
    return walker_i, walker_j, False


def check_caches(target: Target, walkers: Iterable[Walker]) -> None:
    if DEBUG_CACHES:
        for w in walkers:
            verify_walker(target, w)

"""Functional ensemble sampler with parallel tempering.

A random-scan controller picks one of four moves each iteration: stretch
moves on the low-dimensional block at every temperature, pCN on the inlet or
outlet complement at every temperature, or a swap between one adjacent pair
of temperatures. Walkers are stored as a (temperatures x walkers) grid.
"""

import json
import logging
import os
import signal
import threading
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from lwrinfer.cores.config import CHECKPOINT_EVERY, PROGRESS_EVERY
from lwrinfer.cores.constants import (
    BLOCK_INLET,
    BLOCK_OUTLET,
    CHECKPOINT_JSON,
    CHECKPOINT_NPZ,
    MOVE_AIES,
    MOVE_PCN_INLET,
    MOVE_PCN_OUTLET,
    MOVE_SWAP,
    MOVES,
)
from lwrinfer.schemas.config import SamplerSection
from lwrinfer.schemas.sampler import ChainRecord, EnsembleState, MoveStats, RunDiagnostics, Walker
from lwrinfer.services.samplers import (
    Evaluator,
    StateLayout,
    Target,
    aies_update,
    check_caches,
    pcn_sweep,
    pt_swap,
)
from lwrinfer.services.tempering import tune_schedule
from lwrinfer.utils.exceptions import ConfigurationError, InitializationError
from lwrinfer.utils.random import get_state, set_state, spawn_streams

logger = logging.getLogger(__name__)

InitFn = Callable[[np.random.Generator], np.ndarray]

PCN_BLOCKS = {MOVE_PCN_INLET: BLOCK_INLET, MOVE_PCN_OUTLET: BLOCK_OUTLET}


class DeferredInterrupt:
    """Holds SIGINT until the caller polls `pending`; a no-op off the main thread"""

    def __init__(self):
        self.pending = False
        self._installed = False
        self._previous = None

    def _handle(self, signum, frame) -> None:
        self.pending = True
        logger.warning("Interrupt received, stopping after the current iteration")

    def __enter__(self):
        if threading.current_thread() is threading.main_thread():
            self._previous = signal.signal(signal.SIGINT, self._handle)
            self._installed = True
        return self

    def __exit__(self, *exc):
        if self._installed:
            signal.signal(signal.SIGINT, self._previous if self._previous is not None else signal.default_int_handler)
            self._installed = False


class FesPtSampler:
    """Random-scan Metropolis-within-Gibbs over an ensemble at several temperatures"""

    def __init__(
        self,
        target: Target,
        layout: StateLayout,
        settings: SamplerSection,
        evaluator: Optional[Evaluator] = None,
        betas: Optional[Sequence[float]] = None,
    ):
        self.target = target
        self.layout = layout
        self.settings = settings
        self.evaluator = evaluator or Evaluator(target)
        self.betas = list(betas if betas is not None else settings.betas)
        self.omega_in = resize_steps(settings.omega_in, len(self.betas))
        self.omega_out = resize_steps(settings.omega_out, len(self.betas))
        self.move_probs = np.asarray(settings.move_probs, dtype=float)
        for move, block in PCN_BLOCKS.items():
            if self.move_probs[MOVES.index(move)] > 0 and not layout.has_block(block):
                raise ConfigurationError(f"Move '{move}' has positive probability but the state has no '{block}' block")
        self.record_slices = [b.slice for b in layout.blocks if not b.is_gaussian]

        self.controller, self.init_rng, self.rngs = spawn_streams(settings.seed, self.n_temps, settings.n_walkers)
        self.walkers: List[List[Walker]] = []
        self.iteration = 0
        self.stats: Dict[str, List[MoveStats]] = {m: [MoveStats() for _ in self.betas] for m in MOVES if m != MOVE_SWAP}
        self.swap_stats = [MoveStats() for _ in range(max(self.n_temps - 1, 0))]
        self.move_counts = {m: 0 for m in MOVES}
        self._samples: List[np.ndarray] = []
        self._logliks: List[np.ndarray] = []
        self._logpriors: List[np.ndarray] = []
        self._kept: List[int] = []
        self._snapshots: List[np.ndarray] = []
        self._snapshot_its: List[int] = []

    @property
    def n_temps(self) -> int:
        return len(self.betas)

    @property
    def n_walkers(self) -> int:
        return self.settings.n_walkers

    def initialize(self, init_fn: InitFn) -> None:
        """Start every walker at a finite posterior, retrying with fresh draws."""
        n = self.n_temps * self.n_walkers
        states: List[Optional[np.ndarray]] = [None] * n
        results = [(-np.inf, -np.inf)] * n
        pending = list(range(n))
        for attempt in range(self.settings.init_retries):
            proposals = [init_fn(self.init_rng) for _ in pending]
            evaluated = self.evaluator.map(proposals)
            still = []
            for idx, state, res in zip(pending, proposals, evaluated):
                if np.isfinite(res[0]) and np.isfinite(res[1]):
                    states[idx], results[idx] = state, res
                else:
                    still.append(idx)
            pending = still
            if not pending:
                break
            logger.debug(f"Initialization attempt {attempt + 1}: {len(pending)} walkers at -inf")
        if pending:
            raise InitializationError(
                f"{len(pending)} of {n} walkers still at -inf posterior after {self.settings.init_retries} attempts"
            )
        self.walkers = [
            [
                Walker(state=states[k * self.n_walkers + l], loglik=results[k * self.n_walkers + l][0],
                       logprior=results[k * self.n_walkers + l][1])
                for l in range(self.n_walkers)
            ]
            for k in range(self.n_temps)
        ]
        logger.info(f"Initialized {n} walkers over {self.n_temps} temperatures")

    def ensemble(self) -> EnsembleState:
        return EnsembleState(
            walkers=self.walkers,
            betas=self.betas,
            omega_in=self.omega_in,
            omega_out=self.omega_out,
            move_probs=self.move_probs.tolist(),
            truncation=self.settings.truncation,
            stretch_a=self.settings.stretch_a,
            iteration=self.iteration,
        )

    def _aies(self) -> None:
        for k, beta in enumerate(self.betas):
            self.walkers[k], attempted, accepted = aies_update(
                self.walkers[k], self.layout, self.evaluator, beta, self.settings.stretch_a, self.rngs[k]
            )
            self.stats[MOVE_AIES][k].attempted += attempted
            self.stats[MOVE_AIES][k].accepted += accepted

    def _pcn(self, move: str) -> None:
        omegas = self.omega_in if move == MOVE_PCN_INLET else self.omega_out
        for k, beta in enumerate(self.betas):
            self.walkers[k], accepted = pcn_sweep(
                self.walkers[k], PCN_BLOCKS[move], omegas[k], self.layout, self.evaluator, beta, self.rngs[k]
            )
            self.stats[move][k].attempted += self.n_walkers
            self.stats[move][k].accepted += accepted

    def _swap(self) -> None:
        if self.n_temps < 2:
            return
        k = int(self.controller.integers(self.n_temps - 1))
        for l in range(self.n_walkers):
            self.walkers[k][l], self.walkers[k + 1][l], ok = pt_swap(
                self.walkers[k][l], self.walkers[k + 1][l], self.betas[k], self.betas[k + 1], self.rngs[k][l]
            )
            self.swap_stats[k].attempted += 1
            self.swap_stats[k].accepted += ok

    def step(self) -> str:
        """One controller iteration; returns the move applied."""
        move = MOVES[int(self.controller.choice(len(MOVES), p=self.move_probs))]
        if move == MOVE_AIES:
            self._aies()
        elif move == MOVE_SWAP:
            self._swap()
        else:
            self._pcn(move)
        self.move_counts[move] += 1
        self.iteration += 1
        check_caches(self.target, (w for row in self.walkers for w in row))
        return move

    def _record(self) -> None:
        if self.iteration % self.settings.thin == 0:
            states = np.array([[w.state for w in row] for row in self.walkers])
            if self.record_slices:
                kept = np.concatenate([states[..., s] for s in self.record_slices], axis=-1)
            else:
                kept = np.empty(states.shape[:2] + (0,))
            self._samples.append(kept)
            self._logliks.append(np.array([[w.loglik for w in row] for row in self.walkers]))
            self._logpriors.append(np.array([[w.logprior for w in row] for row in self.walkers]))
            self._kept.append(self.iteration)
        if self.iteration % self.settings.snapshot_spacing == 0:
            self._snapshots.append(np.array([w.state for w in self.walkers[0]]))
            self._snapshot_its.append(self.iteration)

    def run(self, n_iters: int, checkpoint_dir: Optional[str] = None, checkpoint_every: Optional[int] = None) -> ChainRecord:
        """Advance until `n_iters` total iterations (counting resumed ones).

        SIGINT stops the run after the current iteration, writes a checkpoint
        and re-raises KeyboardInterrupt.
        """
        if not self.walkers:
            raise InitializationError("Sampler must be initialized or resumed before running")
        every = checkpoint_every or CHECKPOINT_EVERY
        try:
            with DeferredInterrupt() as interrupt:
                while self.iteration < n_iters and not interrupt.pending:
                    self.step()
                    self._record()
                    if self.iteration % PROGRESS_EVERY == 0:
                        logger.info(f"Iteration {self.iteration}/{n_iters}, cold loglik max {self.cold_logliks().max():.2f}")
                    if checkpoint_dir and self.iteration % every == 0:
                        self.save_checkpoint(checkpoint_dir)
        except KeyboardInterrupt:
            logger.warning(f"Interrupted inside iteration {self.iteration + 1}; keeping the last checkpoint")
            raise
        if interrupt.pending:
            if checkpoint_dir:
                logger.warning(f"Interrupted, writing checkpoint at iteration {self.iteration}")
                self.save_checkpoint(checkpoint_dir)
            raise KeyboardInterrupt
        if checkpoint_dir:
            self.save_checkpoint(checkpoint_dir)
        return self.result()

    def cold_logliks(self) -> np.ndarray:
        return np.array([w.loglik for w in self.walkers[0]])

    def diagnostics(self) -> RunDiagnostics:
        return RunDiagnostics(
            iterations=self.iteration,
            move_counts=dict(self.move_counts),
            acceptance={m: [s.rate for s in stats] for m, stats in self.stats.items()},
            swap_rates=[s.rate for s in self.swap_stats],
        )

    def result(self) -> ChainRecord:
        dim = self.layout.dim
        n_rec = sum(s.stop - s.start for s in self.record_slices)
        shape = (self.n_temps, self.n_walkers)
        return ChainRecord(
            betas=self.betas,
            iterations=np.array(self._kept, dtype=float),
            chain=np.array(self._samples) if self._samples else np.empty((0,) + shape + (n_rec,)),
            loglik=np.array(self._logliks) if self._logliks else np.empty((0,) + shape),
            logprior=np.array(self._logpriors) if self._logpriors else np.empty((0,) + shape),
            snapshot_iterations=np.array(self._snapshot_its, dtype=float),
            snapshots=np.array(self._snapshots) if self._snapshots else np.empty((0, self.n_walkers, dim)),
            diagnostics=self.diagnostics(),
        )

    def save_checkpoint(self, directory: str) -> None:
        """Arrays to npz and counters/rng states to JSON, each written atomically."""
        os.makedirs(directory, exist_ok=True)
        rec = self.result()
        npz_path = os.path.join(directory, CHECKPOINT_NPZ)
        tmp_npz = npz_path + ".tmp.npz"
        np.savez(
            tmp_npz,
            states=np.array([[w.state for w in row] for row in self.walkers]),
            loglik=np.array([[w.loglik for w in row] for row in self.walkers]),
            logprior=np.array([[w.logprior for w in row] for row in self.walkers]),
            iterations=rec.iterations,
            chain=rec.chain,
            chain_loglik=rec.loglik,
            chain_logprior=rec.logprior,
            snapshot_iterations=rec.snapshot_iterations,
            snapshots=rec.snapshots,
        )
        os.replace(tmp_npz, npz_path)
        meta = {
            "iteration": self.iteration,
            "betas": self.betas,
            "move_counts": self.move_counts,
            "stats": {m: [s.model_dump() for s in stats] for m, stats in self.stats.items()},
            "swap_stats": [s.model_dump() for s in self.swap_stats],
            "controller": get_state(self.controller),
            "walker_rngs": [[get_state(r) for r in row] for row in self.rngs],
        }
        json_path = os.path.join(directory, CHECKPOINT_JSON)
        with open(json_path + ".tmp", "w") as f:
            json.dump(meta, f)
        os.replace(json_path + ".tmp", json_path)
        logger.info(f"Checkpoint written at iteration {self.iteration} to {directory}")

    def load_checkpoint(self, directory: str) -> None:
        json_path = os.path.join(directory, CHECKPOINT_JSON)
        npz_path = os.path.join(directory, CHECKPOINT_NPZ)
        if not (os.path.exists(json_path) and os.path.exists(npz_path)):
            raise ConfigurationError(f"No checkpoint found in {directory}")
        with open(json_path) as f:
            meta = json.load(f)
        if [float(b) for b in meta["betas"]] != [float(b) for b in self.betas]:
            raise ConfigurationError(f"Checkpoint temperatures {meta['betas']} differ from {self.betas}")
        with np.load(npz_path) as data:
            states, loglik, logprior = data["states"], data["loglik"], data["logprior"]
            if states.shape[:2] != (self.n_temps, self.n_walkers):
                raise ConfigurationError(f"Checkpoint ensemble shape {states.shape[:2]} does not match the settings")
            self.walkers = [
                [Walker(state=states[k, l], loglik=loglik[k, l], logprior=logprior[k, l]) for l in range(self.n_walkers)]
                for k in range(self.n_temps)
            ]
            self._kept = [int(i) for i in data["iterations"]]
            self._samples = list(data["chain"])
            self._logliks = list(data["chain_loglik"])
            self._logpriors = list(data["chain_logprior"])
            self._snapshot_its = [int(i) for i in data["snapshot_iterations"]]
            self._snapshots = list(data["snapshots"])
        self.iteration = int(meta["iteration"])
        self.move_counts = {m: int(c) for m, c in meta["move_counts"].items()}
        self.stats = {m: [MoveStats(**s) for s in stats] for m, stats in meta["stats"].items()}
        self.swap_stats = [MoveStats(**s) for s in meta["swap_stats"]]
        set_state(self.controller, meta["controller"])
        for row, states_row in zip(self.rngs, meta["walker_rngs"]):
            for rng, state in zip(row, states_row):
                set_state(rng, state)
        logger.info(f"Resumed from checkpoint at iteration {self.iteration}")


def checkpoint_betas(directory: str) -> List[float]:
    json_path = os.path.join(directory, CHECKPOINT_JSON)
    if not os.path.exists(json_path):
        raise ConfigurationError(f"No checkpoint found in {directory}")
    with open(json_path) as f:
        return [float(b) for b in json.load(f)["betas"]]


def resize_steps(values: Sequence[float], n: int) -> List[float]:
    """Per-temperature step sizes for n temperatures, interpolating when the count changed."""
    values = list(values)
    if len(values) == n:
        return values
    src = np.linspace(0.0, 1.0, len(values))
    return np.interp(np.linspace(0.0, 1.0, n), src, values).tolist()


def make_pilot(target: Target, layout: StateLayout, settings: SamplerSection, init_fn: InitFn, evaluator: Evaluator):
    """Short single-temperature runs returning cold log-likelihood samples, for schedule tuning."""
    probs = np.array(settings.move_probs[:3], dtype=float)
    probs = (probs / probs.sum()).tolist() + [0.0]

    def pilot(beta: float, rng: np.random.Generator) -> np.ndarray:
        pilot_settings = settings.model_copy(
            update={
                "betas": [1.0],
                "omega_in": [settings.omega_in[0]],
                "omega_out": [settings.omega_out[0]],
                "move_probs": probs,
                "thin": 1,
                "snapshot_every": settings.pilot_iters + 1,
                "seed": int(rng.integers(2 ** 32)),
            }
        )
        sampler = FesPtSampler(target, layout, pilot_settings, evaluator=evaluator, betas=[beta])
        sampler.initialize(init_fn)
        record = sampler.run(settings.pilot_iters)
        burn = record.loglik.shape[0] // 4
        return record.loglik[burn:, 0].ravel()

    return pilot


def fes_pt_run(
    target: Target,
    layout: StateLayout,
    settings: SamplerSection,
    init_fn: InitFn,
    workers: int = 1,
    checkpoint_dir: Optional[str] = None,
    resume: bool = False,
) -> ChainRecord:
    """Build, initialize (or resume) and run the sampler for settings.n_iters iterations."""
    with Evaluator(target, workers) as evaluator:
        betas = checkpoint_betas(checkpoint_dir) if resume else settings.betas
        if settings.tune_temperatures and not resume:
            tuner_rng = np.random.Generator(np.random.PCG64(settings.seed))
            pilot = make_pilot(target, layout, settings, init_fn, evaluator)
            betas = tune_schedule(pilot, settings.base_beta, tuner_rng)
        sampler = FesPtSampler(target, layout, settings, evaluator=evaluator, betas=betas)
        if resume:
            sampler.load_checkpoint(checkpoint_dir)
        else:
            sampler.initialize(init_fn)
        record = sampler.run(settings.n_iters, checkpoint_dir=checkpoint_dir)
    logger.info(f"Run finished: {record.diagnostics.model_dump()}")
    return record

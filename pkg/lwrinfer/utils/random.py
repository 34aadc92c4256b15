from typing import Any, Dict, List, Optional, Tuple

import numpy as np


def make_generator(seed: Optional[int]) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_streams(seed: Optional[int], n_temps: int, n_walkers: int) -> Tuple[
    np.random.Generator, np.random.Generator, List[List[np.random.Generator]]
]:
    """Controller stream, initialization stream and one stream per (temperature, walker)."""
    children = np.random.SeedSequence(seed).spawn(2 + n_temps * n_walkers)
    controller = np.random.Generator(np.random.PCG64(children[0]))
    init = np.random.Generator(np.random.PCG64(children[1]))
    walkers = [
        [np.random.Generator(np.random.PCG64(children[2 + k * n_walkers + l])) for l in range(n_walkers)]
        for k in range(n_temps)
    ]
    return controller, init, walkers


def get_state(rng: np.random.Generator) -> Dict[str, Any]:
    return rng.bit_generator.state


def set_state(rng: np.random.Generator, state: Dict[str, Any]) -> None:
    rng.bit_generator.state = state

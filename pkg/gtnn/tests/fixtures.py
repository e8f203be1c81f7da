from __future__ import annotations

import numpy as np

from gtnn.datagen import dirichlet_unit_vectors, plant_neighbor
from gtnn.exceptions import InfeasibleTargetError
from gtnn.vecstore import VectorStore

RHOS = (0.3, 0.5, 0.7, 0.8, 0.9)


def four_vector_store() -> VectorStore:
    return VectorStore.from_array(
        np.array([[1.0, 0.0], [0.0, 1.0], [0.7071, 0.7071], [0.6, 0.8]])
    )


def random_store(
    rng: np.random.Generator, n: int, d: int, concentration: float = 0.1
) -> VectorStore:
    return VectorStore.from_array(dirichlet_unit_vectors(n, d, concentration, rng))


def random_instances(seed: int, count: int, max_n: int = 512, max_d: int = 64):
    """Yields (store, query, rho) with neighbors planted at and just above rho."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, max_n + 1))
        d = int(rng.integers(2, max_d + 1))
        rho = float(rng.choice(RHOS))
        concentration = float(rng.choice([0.01, 0.1, 1.0]))
        rows = dirichlet_unit_vectors(n, d, concentration, rng)
        q = dirichlet_unit_vectors(1, d, concentration, rng)[0]
        for i in rng.choice(n, size=min(n, int(rng.integers(0, 4))), replace=False):
            try:
                rows[i] = plant_neighbor(q, rho, rng)
            except InfeasibleTargetError:
                continue
        yield VectorStore.from_array(rows), q, rho

"""Shared, deterministic test problems.

Synthetic assemblies are a pure function of ``(index, seed, density)``, so a fixed
parameter set yields a fixed object, fixed charts and fixed seam labels. Tests
sample at density 400 (lattice step 0.05) to keep the suite quick; the hint
partition's link radius is widened to match that spacing.
"""

import copy

from c2lt3d.utils.config import RunConfig, update_config

# Two stacked boxes: object 0 of seed 0 (2 parts -> tower).
SMALL_TOWER = dict(index=0, seed=0, density=400.0)

# Object 3 of seed 0 has 5 parts -> table.
SMALL_TABLE = dict(index=3, seed=0, density=400.0)

# Object 5 of seed 0 has 7 parts -> chair with one ornament.
SMALL_CHAIR = dict(index=5, seed=0, density=400.0)

# Config overrides for density-400 objects.
TEST_CONFIG = {
    "partition": {"link_radius": 0.06},
    "metrics": {"resamples": 200},
    "synth": {"density": 400.0},
}

# Corpus-level acceptance runs.
DECOY_CORPUS = dict(n=200, density=400.0)
PARTITION_CORPUS = dict(n=20, density=400.0)
DETERMINISM_CORPUS = dict(n=4, density=400.0)


def make_config(**sections):
    """A fresh ``RunConfig`` with the test overrides plus ``sections`` applied."""
    config = update_config(RunConfig(), copy.deepcopy(TEST_CONFIG))
    return update_config(config, sections)

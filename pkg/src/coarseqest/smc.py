"""Monte Carlo estimation of joint truth-pattern distributions.

For each initial state, the distribution over the 2^n satisfaction
patterns of n formulae is estimated from independent trajectories; the
collection over states is the property map that downstream stages embed
and cluster.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import SeedSequence

from coarseqest.mitl import FormulaSet, compile_formula_set, network_constants
from coarseqest.model import ReactionNetwork

SIMULATED = "simulated"
IMPUTED = "imputed"

# spawn-key tag separating per-state SMC streams from other pipeline stages
_STATE_STREAM = 1


@dataclass
class SatisfactionDistribution:
    """Probability vector over the 2^n joint truth patterns.

    ``sample_count`` is the number of trajectories behind the estimate
    (0 for GP-imputed distributions); simulated estimates also carry the
    raw pattern counts, which sum to sample_count exactly.
    """

    probs: np.ndarray
    sample_count: int
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 1:
            raise ValueError("probs must be a vector")
        if np.any(self.probs < 0) or abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probs must lie on the probability simplex")

    def standard_errors(self) -> np.ndarray:
        """Per-pattern binomial standard errors (zeros when imputed)."""
        if self.sample_count == 0:
            return np.zeros_like(self.probs)
        p = self.probs
        return np.sqrt(p * (1.0 - p) / self.sample_count)


@dataclass
class PropertyMap:
    """Association from initial states to satisfaction distributions."""

    formula_names: tuple
    entries: dict = field(default_factory=dict)  # state -> (dist, provenance)

    def states(self) -> list:
        return list(self.entries.keys())

    def distribution(self, state) -> SatisfactionDistribution:
        return self.entries[tuple(state)][0]

    def provenance(self, state) -> str:
        return self.entries[tuple(state)][1]

    def simulated_states(self) -> list:
        return [s for s, (_, prov) in self.entries.items() if prov == SIMULATED]

    def add(self, state, dist: SatisfactionDistribution, provenance: str):
        state = tuple(int(c) for c in state)
        if state in self.entries:
            raise ValueError(f"duplicate state {state}")
        if provenance not in (SIMULATED, IMPUTED):
            raise ValueError(f"unknown provenance {provenance!r}")
        self.entries[state] = (dist, provenance)

    def __len__(self) -> int:
        return len(self.entries)


def sample_states(all_states: list, fraction: float, seed) -> list:
    """Uniform sample without replacement of floor(fraction*|all|) states
    (minimum 1), deterministic given the seed; fraction 1.0 keeps the
    original order."""
    if not all_states:
        raise ValueError("empty state list")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(all_states)
    count = max(int(math.floor(fraction * len(all_states))), 1)
    seedseq = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(seedseq))
    idx = rng.choice(len(all_states), size=count, replace=False)
    idx.sort()
    return [all_states[i] for i in idx]


def estimate_distribution(
    network: ReactionNetwork,
    init,
    formulas: FormulaSet,
    m: int,
    horizon: float | None = None,
    seed=0,
    constants=None,
) -> SatisfactionDistribution:
    """SMC estimate at one initial state: counts/m over the 2^n patterns."""
    from coarseqest._backend import active_backend

    if m < 1:
        raise ValueError(f"need at least one trajectory, got m={m}")
    init = network.validate_state(init)
    compiled = compile_formula_set(
        formulas, network.species, network_constants(network, constants)
    )
    if horizon is None:
        horizon = compiled.required_horizon
    seedseq = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    counts = active_backend().smc_batch(
        network.reactant_matrix,
        network.net_matrix,
        network.rate_constants,
        np.asarray(init, dtype=np.int64),
        float(horizon),
        compiled,
        int(m),
        seedseq,
    )
    return SatisfactionDistribution(probs=counts / float(m), sample_count=int(m), counts=counts)


def build_property_map(
    network: ReactionNetwork,
    states: list,
    formulas: FormulaSet,
    m: int,
    horizon: float | None = None,
    seed=0,
    constants=None,
    workers: int = 1,
) -> PropertyMap:
    """One simulated entry per state; per-state streams are derived from
    (master seed, state index), so results do not depend on the worker
    count or scheduling order."""
    if not states:
        raise ValueError("empty state list")

    compiled = compile_formula_set(
        formulas, network.species, network_constants(network, constants)
    )
    hz = compiled.required_horizon if horizon is None else float(horizon)
    master = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    entropy = master.entropy

    def job(item):
        idx, state = item
        state_seed = SeedSequence(entropy, spawn_key=(_STATE_STREAM, idx))
        return estimate_distribution(
            network, state, formulas, m, hz, state_seed, constants
        )

    items = list(enumerate(states))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            dists = list(pool.map(job, items))
    else:
        dists = [job(it) for it in items]

    pmap = PropertyMap(formula_names=tuple(formulas.names))
    for state, dist in zip(states, dists):
        pmap.add(network.validate_state(state), dist, SIMULATED)
    return pmap


# --- persistence ------------------------------------------------------------


def save_property_map(path, pmap: PropertyMap, species, metadata: dict | None = None):
    """Tabular file: one row per state with counts, provenance, sample count
    and the full probability vector (round-trip decimal rendering)."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (metadata or {}).items():
            fh.write(f"#{key}={value}\n")
        fh.write(f"#formulas={','.join(pmap.formula_names)}\n")
        n_patterns = 1 << len(pmap.formula_names)
        header = list(species) + ["provenance", "samples"] + [f"p{i}" for i in range(n_patterns)]
        fh.write("\t".join(header) + "\n")
        for state, (dist, prov) in pmap.entries.items():
            row = [str(c) for c in state] + [prov, str(dist.sample_count)]
            row += [repr(float(p)) for p in dist.probs]
            fh.write("\t".join(row) + "\n")


def load_property_map(path, n_species: int):
    """Inverse of save_property_map; returns (map, metadata)."""
    metadata = {}
    pmap = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                metadata[key] = value
                continue
            cells = line.split("\t")
            if pmap is None:
                names = tuple(metadata.get("formulas", "").split(","))
                pmap = PropertyMap(formula_names=names)
                continue  # header row
            state = tuple(int(c) for c in cells[:n_species])
            prov = cells[n_species]
            samples = int(cells[n_species + 1])
            probs = np.array([float(c) for c in cells[n_species + 2 :]])
            pmap.add(state, SatisfactionDistribution(probs, samples), prov)
    if pmap is None:
        raise ValueError(f"no property map found in {path}")
    return pmap, metadata

"""Population-CTMC reaction networks and exact stochastic simulation.

States are vectors of non-negative species counts; transitions are
mass-action reactions.  Trajectories are sampled exactly with the
Gillespie algorithm (exponential waiting times with rate equal to the
total propensity, reaction chosen proportionally to its propensity).
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from numpy.random import SeedSequence

if sys.version_info >= (3, 11):
    import tomllib as _toml
else:
    import tomli as _toml

State = tuple  # tuple of non-negative ints, one per species


class ModelError(ValueError):
    """Base class for model construction/parsing problems."""


class ModelSyntaxError(ModelError):
    """The model document is not well-formed (position in message)."""


class ModelSemanticsError(ModelError):
    """Well-formed document with invalid content (unknown species, bad rate...)."""


class UnboundedStateSpaceError(ModelError):
    """State enumeration requested without conservation or explicit bounds."""


@dataclass(frozen=True)
class Reaction:
    """One mass-action reaction: reactant/product stoichiometry plus a rate constant.

    The propensity in state ``x`` is ``rate_constant * prod_i ff(x_i, r_i)``
    where ``ff`` is the falling factorial, so it is zero whenever a reactant
    count exceeds the available population.
    """

    name: str
    reactants: tuple
    products: tuple
    rate_constant: float

    @property
    def net(self) -> tuple:
        return tuple(p - r for r, p in zip(self.reactants, self.products))


@dataclass(frozen=True)
class ReactionNetwork:
    """A validated population CTMC.

    ``conservation`` is the optional total-population constant; when set,
    every reaction preserves the total count and every valid state sums
    to it.
    """

    species: tuple
    reactions: tuple
    conservation: int | None = None

    def __post_init__(self):
        n = len(self.species)
        if n == 0:
            raise ModelSemanticsError("network needs at least one species")
        if len(set(self.species)) != n:
            raise ModelSemanticsError("duplicate species names")
        for rx in self.reactions:
            if len(rx.reactants) != n or len(rx.products) != n:
                raise ModelSemanticsError(
                    f"reaction {rx.name!r}: stoichiometry length != species count"
                )
            if any(c < 0 for c in rx.reactants) or any(c < 0 for c in rx.products):
                raise ModelSemanticsError(f"reaction {rx.name!r}: negative stoichiometry")
            rate = rx.rate_constant
            if not (np.isfinite(rate) and rate > 0):
                raise ModelSemanticsError(
                    f"reaction {rx.name!r}: rate constant must be a positive finite real, got {rate!r}"
                )
            if self.conservation is not None and sum(rx.net) != 0:
                raise ModelSemanticsError(
                    f"reaction {rx.name!r} changes the total population but "
                    f"a conservation constant of {self.conservation} is declared"
                )

    @cached_property
    def reactant_matrix(self) -> np.ndarray:
        return np.array([rx.reactants for rx in self.reactions], dtype=np.int64).reshape(
            len(self.reactions), len(self.species)
        )

    @cached_property
    def net_matrix(self) -> np.ndarray:
        return np.array([rx.net for rx in self.reactions], dtype=np.int64).reshape(
            len(self.reactions), len(self.species)
        )

    @cached_property
    def rate_constants(self) -> np.ndarray:
        return np.array([rx.rate_constant for rx in self.reactions], dtype=np.float64)

    def species_index(self, name: str) -> int:
        try:
            return self.species.index(name)
        except ValueError:
            raise ModelSemanticsError(f"unknown species {name!r}") from None

    def validate_state(self, state: Sequence) -> tuple:
        state = tuple(int(c) for c in state)
        if len(state) != len(self.species):
            raise ModelSemanticsError(
                f"state has {len(state)} counts for {len(self.species)} species"
            )
        if any(c < 0 for c in state):
            raise ModelSemanticsError(f"negative count in state {state}")
        if self.conservation is not None and sum(state) != self.conservation:
            raise ModelSemanticsError(
                f"state {state} does not sum to the conservation constant {self.conservation}"
            )
        return state


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant, right-continuous sample path.

    ``times`` holds the strictly increasing jump times and ``states[i]``
    the state entered at ``times[i]``; the value at time t is the state
    of the latest jump <= t (the initial state before the first jump).
    """

    network: ReactionNetwork
    initial_state: tuple
    times: np.ndarray
    states: np.ndarray
    horizon: float

    def __len__(self) -> int:
        return len(self.times)

    def state_at(self, t: float) -> tuple:
        if t < 0 or t > self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        if i < 0:
            return self.initial_state
        return tuple(int(c) for c in self.states[i])

    def segment_times(self) -> np.ndarray:
        """Start times of the constant segments: 0 followed by the jump times."""
        return np.concatenate(([0.0], self.times))

    def segment_states(self) -> np.ndarray:
        """States on the constant segments, aligned with segment_times()."""
        init = np.asarray(self.initial_state, dtype=np.int64).reshape(1, -1)
        if len(self.times) == 0:
            return init
        return np.concatenate((init, self.states), axis=0)


def parse_model(text: str) -> ReactionNetwork:
    """Parse a model document (TOML) into a validated ReactionNetwork.

    Expected keys: ``species`` (ordered name list), optional ``population``
    (conservation integer) and ``reactions`` (list of tables with ``name``,
    ``reactants``, ``products`` and ``rate``).
    """
    try:
        doc = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ModelSyntaxError(f"model document is not valid TOML: {exc}") from exc

    species = doc.get("species")
    if not isinstance(species, list) or not species or not all(isinstance(s, str) for s in species):
        raise ModelSemanticsError("'species' must be a non-empty list of names")
    species = tuple(species)

    conservation = doc.get("population")
    if conservation is not None:
        if not isinstance(conservation, int) or conservation < 0:
            raise ModelSemanticsError("'population' must be a non-negative integer")

    raw_reactions = doc.get("reactions")
    if not isinstance(raw_reactions, list) or not raw_reactions:
        raise ModelSemanticsError("'reactions' must be a non-empty list")

    index = {name: i for i, name in enumerate(species)}
    reactions = []
    for k, entry in enumerate(raw_reactions):
        if not isinstance(entry, dict):
            raise ModelSemanticsError(f"reaction #{k + 1} is not a table")
        name = entry.get("name", f"reaction_{k + 1}")

        def stoich(key: str) -> tuple:
            counts = [0] * len(species)
            for sp, c in entry.get(key, {}).items():
                if sp not in index:
                    raise ModelSemanticsError(f"reaction {name!r}: unknown species {sp!r}")
                if not isinstance(c, int) or c < 0:
                    raise ModelSemanticsError(
                        f"reaction {name!r}: {key} count for {sp!r} must be a non-negative integer"
                    )
                counts[index[sp]] = c
            return tuple(counts)

        if "rate" not in entry:
            raise ModelSemanticsError(f"reaction {name!r}: missing rate")
        reactions.append(
            Reaction(
                name=str(name),
                reactants=stoich("reactants"),
                products=stoich("products"),
                rate_constant=float(entry["rate"]),
            )
        )

    return ReactionNetwork(species=species, reactions=tuple(reactions), conservation=conservation)


def load_model(path) -> ReactionNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def propensities(network: ReactionNetwork, state: Sequence) -> np.ndarray:
    """Mass-action propensity of every reaction in ``state`` (all >= 0)."""
    x = np.asarray(network.validate_state(state), dtype=np.float64)
    r = network.reactant_matrix
    out = network.rate_constants.copy()
    for j in range(r.shape[0]):
        for i in range(r.shape[1]):
            for step in range(r[j, i]):
                out[j] *= x[i] - step
        out[j] = max(out[j], 0.0)
    return out


def simulate_ssa(
    network: ReactionNetwork,
    init: Sequence,
    horizon: float,
    seed,
) -> Trajectory:
    """Exact Gillespie sample path over [0, horizon], deterministic given seed.

    ``seed`` is an int or a numpy SeedSequence.  If the total propensity
    reaches zero the trajectory stays constant up to the horizon.
    """
    from coarseqest._backend import active_backend

    init = network.validate_state(init)
    if not horizon > 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    seedseq = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    times, states = active_backend().ssa_trajectory(
        network.reactant_matrix,
        network.net_matrix,
        network.rate_constants,
        np.asarray(init, dtype=np.int64),
        float(horizon),
        seedseq,
    )
    return Trajectory(
        network=network, initial_state=init, times=times, states=states, horizon=float(horizon)
    )


def enumerate_states(
    network: ReactionNetwork, bounds: Sequence | None = None
) -> list:
    """All states consistent with the conservation constant and/or bounds.

    Returned in ascending lexicographic order of the count tuples.  Without
    a conservation constant an explicit per-species ``bounds`` sequence
    (inclusive maxima) is required; conservation-only enumeration is
    limited to <= 3 species (2 free dimensions).
    """
    n = len(network.species)
    cons = network.conservation
    if bounds is not None:
        if len(bounds) != n:
            raise ModelSemanticsError("bounds length must match species count")
        ranges = [range(int(b) + 1) for b in bounds]
        out = []
        import itertools

        for combo in itertools.product(*ranges):
            if cons is None or sum(combo) == cons:
                out.append(tuple(combo))
        return out
    if cons is None:
        raise UnboundedStateSpaceError(
            "state space is unbounded: no conservation constant and no explicit bounds"
        )
    if n > 3:
        raise UnboundedStateSpaceError(
            "conservation-only enumeration supports at most 3 species; pass explicit bounds"
        )
    out = []
    if n == 1:
        return [(cons,)]
    if n == 2:
        return [(a, cons - a) for a in range(cons + 1)]
    for a in range(cons + 1):
        for b in range(cons - a + 1):
            out.append((a, b, cons - a - b))
    return out

"""Independent brute-force oracles used by the test-suite.

The MITL oracle evaluates formulae by naive recursive scanning over a
discretisation made of all jump times, shifted interval endpoints and
midpoints between them; it shares no code with the signal-based monitor.
"""
from __future__ import annotations

import numpy as np

from coarseqest.mitl import (
    Always,
    And,
    Atom,
    BinOp,
    Const,
    Eventually,
    Neg,
    Not,
    TrueFormula,
    Until,
    Var,
)


def _expr_value(expr, state, species_index, constants):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Var):
        if expr.name in species_index:
            return float(state[species_index[expr.name]])
        return float(constants[expr.name])
    if isinstance(expr, Neg):
        return -_expr_value(expr.child, state, species_index, constants)
    if isinstance(expr, BinOp):
        lhs = _expr_value(expr.left, state, species_index, constants)
        rhs = _expr_value(expr.right, state, species_index, constants)
        return {"+": lhs + rhs, "-": lhs - rhs, "*": lhs * rhs, "/": lhs / rhs if rhs else np.inf}[
            expr.op
        ]
    raise TypeError(expr)


def critical_times(formula, jump_times):
    """Downward closure of the jump times under window-bound shifts."""
    if isinstance(formula, (TrueFormula, Atom)):
        return set(jump_times) | {0.0}
    if isinstance(formula, Not):
        return critical_times(formula.child, jump_times)
    if isinstance(formula, And):
        return critical_times(formula.left, jump_times) | critical_times(
            formula.right, jump_times
        )
    if isinstance(formula, Until):
        base = critical_times(formula.left, jump_times) | critical_times(
            formula.right, jump_times
        )
    else:
        base = critical_times(formula.child, jump_times)
    return base | {c - formula.t1 for c in base} | {c - formula.t2 for c in base}


class BruteForceMonitor:
    """Naive exhaustive-scan evaluator over trajectory jump times plus
    shifted interval endpoints (the discretisation oracle)."""

    def __init__(self, trajectory, constants=None):
        self.traj = trajectory
        net = trajectory.network
        self.species_index = {name: i for i, name in enumerate(net.species)}
        self.constants = dict(constants or {})
        if net.conservation is not None:
            self.constants.setdefault("N", float(net.conservation))
        self.jumps = [float(t) for t in trajectory.times]
        self._memo = {}

    def _state(self, t):
        return self.traj.state_at(min(t, self.traj.horizon))

    def eval(self, formula, t):
        crit = sorted(c for c in critical_times(formula, self.jumps) if 0.0 <= c)
        self._memo.clear()
        return self._eval(formula, t, crit)

    def _eval(self, formula, t, crit):
        key = (id(formula), t)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = self._eval_raw(formula, t, crit)
        return hit

    def _eval_raw(self, formula, t, crit):
        if isinstance(formula, TrueFormula):
            return True
        if isinstance(formula, Atom):
            state = self._state(t)
            lhs = _expr_value(formula.left, state, self.species_index, self.constants)
            rhs = _expr_value(formula.right, state, self.species_index, self.constants)
            return {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs, ">=": lhs >= rhs}[
                formula.op
            ]
        if isinstance(formula, Not):
            return not self._eval(formula.child, t, crit)
        if isinstance(formula, And):
            return self._eval(formula.left, t, crit) and self._eval(formula.right, t, crit)

        if isinstance(formula, (Eventually, Always)):
            child, a, b = formula.child, formula.t1, formula.t2
        else:
            child, a, b = formula.right, formula.t1, formula.t2
        lo, hi = t + a, t + b
        pts = sorted({lo, hi} | {c for c in crit if lo < c < hi})
        cands = list(pts)
        for p, q in zip(pts, pts[1:]):
            cands.append((p + q) * 0.5)
        cands.sort()

        if isinstance(formula, Eventually):
            return any(self._eval(child, w, crit) for w in cands)
        if isinstance(formula, Always):
            return all(self._eval(child, w, crit) for w in cands)

        # until: a witness w needs formula.right at w and formula.left
        # everywhere on [t, w)
        for w in cands:
            if not self._eval(formula.right, w, crit):
                continue
            if self._holds_throughout(formula.left, t, w, crit):
                return True
        return False

    def _holds_throughout(self, formula, t, w, crit):
        if w <= t:
            return True  # empty interval [t, w)
        base = sorted({t} | {c for c in crit if t < c < w})
        checks = list(base)
        for p, q in zip(base, base[1:]):
            checks.append((p + q) * 0.5)
        checks.append((base[-1] + w) * 0.5)
        return all(self._eval(formula, p, crit) for p in checks)


# --- random generators for equivalence testing -----------------------------


def random_trajectory(network, rng, max_jumps=12, horizon=20.0, max_count=6):
    """Hand-built piecewise-constant trajectory (not an SSA sample): random
    jump times and random states, for monitor-vs-oracle stress tests."""
    from coarseqest.model import Trajectory

    k = int(rng.integers(0, max_jumps + 1))
    times = np.sort(rng.uniform(0.0, horizon, size=k))
    times = np.unique(times)
    k = len(times)
    ns = len(network.species)
    states = rng.integers(0, max_count + 1, size=(k, ns)).astype(np.int64)
    init = tuple(int(v) for v in rng.integers(0, max_count + 1, size=ns))
    return Trajectory(
        network=network,
        initial_state=init,
        times=times,
        states=states,
        horizon=horizon,
    )


def random_formula(network, rng, depth, horizon=20.0):
    """Random formula of temporal depth <= depth whose window fits in horizon."""
    species = network.species

    def atom():
        sp = Var(str(rng.choice(species)))
        c = Const(float(rng.integers(0, 7)))
        op = str(rng.choice(["<", "<=", ">", ">="]))
        if rng.random() < 0.3:
            return Atom(BinOp("*", Const(float(rng.integers(1, 3))), sp), op, c)
        return Atom(sp, op, c)

    def build(d, budget):
        choices = ["atom", "not", "and"]
        if d > 0 and budget > 0.5:
            choices += ["until", "eventually", "always"] * 2
        kind = str(rng.choice(choices))
        if kind == "atom" or d == 0:
            return atom() if rng.random() < 0.9 else TrueFormula()
        if kind == "not":
            return Not(build(d - 1 if rng.random() < 0.5 else d, budget))
        if kind == "and":
            return And(build(d - 1, budget), build(d - 1, budget))
        t1 = round(float(rng.uniform(0, budget * 0.4)), 3)
        t2 = round(float(rng.uniform(t1, budget * 0.6)), 3)
        inner_budget = budget - t2
        if kind == "until":
            return Until(build(d - 1, inner_budget), build(d - 1, inner_budget), t1, t2)
        if kind == "eventually":
            return Eventually(build(d - 1, inner_budget), t1, t2)
        return Always(build(d - 1, inner_budget), t1, t2)

    return build(depth, horizon)

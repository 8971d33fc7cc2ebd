"""Property and oracle checks for the CfC cell and the trainer's hand-written gradients."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cfc import CfcCell, cell_step
from .trainer import TOY_CONFIG, gradient_check

GRAD_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _cell(rng: np.random.Generator, in_dim: int = 6, hidden: int = 8) -> CfcCell:
    log_tau = rng.uniform(math.log(0.5), math.log(300.0), hidden)
    return CfcCell(in_dim, hidden, (16,), log_tau, rng)


def identity_check(seed: int = 0, samples: int = 1000) -> CheckResult:
    """dt = 0 must return the state unchanged, bit for bit."""
    rng = np.random.default_rng(seed)
    cell = _cell(rng)
    h = rng.normal(0, 2, (samples, cell.hidden))
    x = rng.normal(0, 1, (samples, cell.in_dim))
    out = cell_step(cell, h, x, np.zeros(samples))
    bad = int(np.count_nonzero(out != h))
    return CheckResult("dt=0 identity", bad == 0, f"{bad} mismatching entries over {samples} samples")


def interpolation_check(seed: int = 0, samples: int = 10_000) -> CheckResult:
    """Each neuron's new state lies between its old state and the target f([x, h])."""
    rng = np.random.default_rng(seed + 1)
    cell = _cell(rng)
    h = rng.normal(0, 2, (samples, cell.hidden))
    x = rng.normal(0, 1, (samples, cell.in_dim))
    dt = rng.exponential(60.0, samples)
    out = cell_step(cell, h, x, dt)
    f = cell.target(x, h)
    lo, hi = np.minimum(h, f), np.maximum(h, f)
    slack = 1e-12 * (1 + np.abs(h) + np.abs(f))
    bad = int(np.count_nonzero((out < lo - slack) | (out > hi + slack)))
    return CheckResult("interpolation", bad == 0, f"{bad} violations over {samples} samples")


def midpoint_check(seed: int = 0) -> CheckResult:
    """tau = 1 and dt = ln 2 halve the gap: h' = (h + f) / 2."""
    rng = np.random.default_rng(seed + 2)
    cell = _cell(rng)
    cell.log_tau[:] = 0.0
    h = rng.normal(0, 1, cell.hidden)
    x = rng.normal(0, 1, cell.in_dim)
    out = cell_step(cell, h, x, math.log(2.0))
    err = float(np.max(np.abs(out - 0.5 * (h + cell.target(x, h)))))
    return CheckResult("ln2 midpoint", err <= 1e-12, f"max abs error {err:.3e}")


def gradient_checks(seeds=(0, 1, 2), tol: float = GRAD_TOL) -> CheckResult:
    reports = [gradient_check(s, TOY_CONFIG) for s in seeds]
    worst = max(reports, key=lambda r: r.max_rel_error)
    return CheckResult("gradient vs finite differences", worst.max_rel_error <= tol,
                       f"max relative error {worst.max_rel_error:.3e} (seed {worst.seed}, {worst.worst_parameter})")


def run_all(seed: int = 0) -> list[CheckResult]:
    return [identity_check(seed), interpolation_check(seed), midpoint_check(seed), gradient_checks()]

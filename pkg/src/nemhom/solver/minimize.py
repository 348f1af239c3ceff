"""Gradient descent with Armijo backtracking on the free nodes of a field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError


@dataclass
class MinimizeOptions:
    max_iterations: int = 2000
    grad_tol: float = 1e-4      # sup-norm of the free-node gradient
    initial_step: float = 0.5
    armijo_c: float = 1e-4
    shrink: float = 0.5
    grow: float = 2.0
    max_step: float = 64.0
    min_step: float = 1e-14

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def minimize(assembler, field, options: MinimizeOptions = None):
    """Minimize the assembled energy over the free nodes.

    Returns (field, breakdown, log): the energy trace is monotone
    non-increasing, boundary values are untouched, and the loop terminates
    when the gradient sup-norm drops below tolerance or on iteration budget.
    Line-search failure (no descent at the minimum step) raises.
    """
    opt = options or MinimizeOptions()
    f = field.copy()
    free = f.free[..., None]
    g, bd = assembler.gradient(f)
    g = np.where(free, g, 0.0)
    energy = bd.total
    step = opt.initial_step
    log = []
    converged = False
    for it in range(opt.max_iterations):
        g_sup = float(np.max(np.abs(g)))
        g_nrm2 = float(np.sum(g * g))
        log.append({'iteration': it, 'elastic': bd.elastic, 'bulk': bd.bulk,
                    'surface': bd.surface, 'total': energy,
                    'grad_sup': g_sup, 'step': step})
        if g_sup < opt.grad_tol:
            converged = True
            break
        while True:
            trial = f.with_values(f.values - step * g)
            bd_t = assembler.energy(trial)
            if bd_t.total <= energy - opt.armijo_c * step * g_nrm2:
                break
            step *= opt.shrink
            if step < opt.min_step:
                raise NumericalError(
                    f"line search stalled at iteration {it}: energy {energy:.6e}, "
                    f"gradient sup-norm {g_sup:.3e}")
        f = trial
        g, bd = assembler.gradient(f)
        g = np.where(free, g, 0.0)
        energy = bd.total
        step = min(step * opt.grow, opt.max_step)
    if not converged:
        g_sup = float(np.max(np.abs(g)))
        log.append({'iteration': len(log), 'elastic': bd.elastic, 'bulk': bd.bulk,
                    'surface': bd.surface, 'total': energy,
                    'grad_sup': g_sup, 'step': step})
    return f, bd, log

"""Loss ratio, constraint-violation penalties and the penalised objective.

``F = alpha * J + (1 - alpha) * Gamma`` with ``J = P_loss / P_gen`` and
``Gamma = (1 - beta) * Gamma_I + beta * Gamma_V``.  Both violation terms take
the *maximum* penalty over buses / branches, not the sum.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError
from .grid_model import NetworkModel
from .powerflow import PowerFlowResult


@dataclass(frozen=True)
class ObjectiveParams:
    alpha: float = 0.9
    beta: float = 0.2
    kappa_v: float = 100.0
    kappa_i: float = 100.0
    # fitness assigned to candidates whose power flow diverged
    gamma_ceiling: float = 1e6

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if not (self.kappa_v > 0 and self.kappa_i > 0):
            raise ValueError("penalty steepness must be positive")


@dataclass(frozen=True)
class ObjectiveBreakdown:
    j: float
    gamma_v: float
    gamma_i: float
    gamma: float
    f: float
    p_loss: float = float("nan")     # kW, carried along for reporting

    @property
    def feasible(self) -> bool:
        return self.gamma == 0.0

    def row(self) -> dict:
        return {"j": self.j, "gamma_v": self.gamma_v, "gamma_i": self.gamma_i,
                "gamma": self.gamma, "f": self.f}


@dataclass(frozen=True)
class NormalizationDiagnostics:
    j_max: float
    gamma_max: float
    alpha_eq: float


def penalty_v(x, kappa: float = 100.0, lo: float = 0.9, hi: float = 1.1):
    """Zero inside ``[lo, hi]``, quadratic in the distance outside."""
    x = np.asarray(x, dtype=float)
    out = kappa * (np.square(np.maximum(lo - x, 0.0)) + np.square(np.maximum(x - hi, 0.0)))
    return float(out) if out.ndim == 0 else out


def penalty_i(x, kappa: float = 100.0):
    x = np.asarray(x, dtype=float)
    out = kappa * np.square(np.maximum(x - 1.0, 0.0))
    return float(out) if out.ndim == 0 else out


def gamma_terms(result: PowerFlowResult, model: NetworkModel,
                params: ObjectiveParams = ObjectiveParams()) -> tuple[float, float]:
    """``(gamma_v, gamma_i)``: worst voltage and worst current penalty."""
    lo = np.array([b.v_min_frac for b in model.buses])
    hi = np.array([b.v_max_frac for b in model.buses])
    gv = penalty_v(result.v_pu, params.kappa_v, lo, hi)
    gi = penalty_i(result.i_ratio, params.kappa_i)
    return (float(np.max(gv)) if np.size(gv) else 0.0,
            float(np.max(gi)) if np.size(gi) else 0.0)


def combine(j: float, gamma_v: float, gamma_i: float, params: ObjectiveParams,
            p_loss: float = float("nan")) -> ObjectiveBreakdown:
    gamma = (1.0 - params.beta) * gamma_i + params.beta * gamma_v
    f = params.alpha * j + (1.0 - params.alpha) * gamma
    return ObjectiveBreakdown(j, gamma_v, gamma_i, gamma, f, p_loss)


def evaluate(result: PowerFlowResult, model: NetworkModel,
             params: ObjectiveParams = ObjectiveParams()) -> ObjectiveBreakdown:
    if not result.converged:
        raise EvaluationError("power flow did not converge")
    if result.p_gen > 0:
        j = (result.p_gen - result.p_load) / result.p_gen
    else:
        j = 0.0
    gv, gi = gamma_terms(result, model, params)
    return combine(j, gv, gi, params, result.p_loss)


def worst(params: ObjectiveParams) -> ObjectiveBreakdown:
    """Sentinel breakdown for diverged power flows."""
    c = params.gamma_ceiling
    return ObjectiveBreakdown(float("nan"), c, c, c, c)


def alpha_eq(alpha: float, j_max: float, gamma_max: float) -> float:
    """Weight on the loss term once both terms are rescaled by their maxima."""
    if not (j_max > 0 and gamma_max > 0):
        raise ValueError("j_max and gamma_max must be positive")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    num = alpha * j_max
    return num / (num + (1.0 - alpha) * gamma_max)


def normalization_diagnostics(breakdowns, alpha: float) -> NormalizationDiagnostics:
    j_max = max(b.j for b in breakdowns)
    g_max = max(b.gamma for b in breakdowns)
    a = alpha_eq(alpha, j_max, g_max) if j_max > 0 and g_max > 0 else float("nan")
    return NormalizationDiagnostics(j_max, g_max, a)

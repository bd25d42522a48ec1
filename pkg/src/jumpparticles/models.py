"""Named built-in intensity measures and coefficient models."""
from __future__ import annotations

import inspect
import math

import numpy as np

from . import coefficients as co
from .errors import ModelError
from .levy import LevyMeasureModel, unit_ball_volume


def lebesgue(d: int = 1, max_ring: int = 64) -> LevyMeasureModel:
    vol = unit_ball_volume(d)
    return LevyMeasureModel(
        d=d,
        density=lambda z: np.ones(len(z)),
        radial=True,
        profile=lambda r: np.ones_like(np.asarray(r, dtype=float)),
        max_ring=max_ring,
        ring_mass_closed_form=lambda k: vol * (k ** d - (k - 1) ** d),
        log_density_derivative_bound=0.0,
        name="lebesgue",
        params={"d": d},
    )


def alpha_stable_inverted(alpha: float = 0.5, max_ring: int = 64) -> LevyMeasureModel:
    """mu(dz) = 1_{|z|>=1} |z|^(alpha-1) dz on the real line."""
    if not 0 <= alpha < 1:
        raise ModelError("alpha must lie in [0, 1)")

    def profile(r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r >= 1.0, r, 1.0)
        return np.where(r >= 1.0, safe ** (alpha - 1.0), 0.0)

    def ring_mass(k):
        if k == 1:
            return 0.0
        if alpha == 0:
            return 2.0 * math.log(k / (k - 1))
        return 2.0 * (k ** alpha - (k - 1) ** alpha) / alpha

    return LevyMeasureModel(
        d=1,
        density=lambda z: profile(np.abs(np.asarray(z, dtype=float)[:, 0])),
        radial=True,
        profile=profile,
        support_lower_radius=1.0,
        max_ring=max_ring,
        ring_mass_closed_form=ring_mass,
        log_density_derivative_bound=abs(alpha - 1.0),
        name="example2-alpha-stable",
        params={"alpha": alpha},
    )


def _call(fn, params: dict, context: str):
    allowed = set(inspect.signature(fn).parameters)
    unknown = set(params) - allowed
    if unknown:
        raise ModelError(f"unknown parameter(s) {sorted(unknown)} for {context}; allowed: {sorted(allowed)}")
    return fn(**params)


# name -> (measure factory, measure params, default coefficient name)
def build_model(name: str, params: dict | None = None):
    """Return ``(levy, default_coefficients)`` for a built-in model name."""
    params = dict(params or {})
    max_ring = params.pop("max_ring", 64)
    if name == "lebesgue":
        d = params.pop("d", 1)
        if params:
            raise ModelError(f"unknown parameter(s) {sorted(params)} for model lebesgue")
        return lebesgue(d, max_ring), co.zero(d)
    if name == "example1-exp":
        d = params.get("d", 1)
        return lebesgue(d, max_ring), _call(co.example1_exp, params, name)
    if name == "example1-poly":
        d = params.get("d", 1)
        return lebesgue(d, max_ring), _call(co.example1_poly, params, name)
    if name == "example2-alpha-stable":
        alpha = params.pop("alpha", 0.5)
        return alpha_stable_inverted(alpha, max_ring), _call(co.example2, params, name)
    raise ModelError(f"unknown model {name!r}; choose from {sorted(MODEL_NAMES)}")


MODEL_NAMES = ("lebesgue", "example1-exp", "example1-poly", "example2-alpha-stable")

COEFFICIENTS = {
    "zero": co.zero,
    "linear-drift": co.linear_drift,
    "mean-reverting": co.linear_drift,
    "constant-jump": co.constant_jump,
    "kac": co.kac,
    "compound-poisson": co.compound_poisson,
    "example1-exp": co.example1_exp,
    "example1-poly": co.example1_poly,
    "example2": co.example2,
    "pure-gaussian": co.pure_gaussian,
}


def build_coefficients(name: str, params: dict | None = None, d: int = 1) -> co.CoefficientModel:
    if name not in COEFFICIENTS:
        raise ModelError(f"unknown coefficient model {name!r}; choose from {sorted(COEFFICIENTS)}")
    fn = COEFFICIENTS[name]
    params = dict(params or {})
    if "d" in inspect.signature(fn).parameters:
        params.setdefault("d", d)
    model = _call(fn, params, f"coefficients {name}")
    if model.d != d:
        raise ModelError(f"coefficient model {name} has dimension {model.d}, measure has {d}")
    return model

"""Reference-point scaling: search in ``v``, evaluate ``w = |s| * v``.

The optimizer starts at ``v = 0`` with unit step size; signs of the physical
gains come entirely from ``v``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ScalingSpec:
    reference: np.ndarray
    magnitudes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        ref = np.array(self.reference, dtype=float).ravel()
        if ref.size == 0 or not np.all(np.isfinite(ref)):
            raise ConfigError("reference_gains: must be a non-empty finite vector")
        mags = np.abs(ref)
        if np.any(mags == 0):
            bad = np.flatnonzero(mags == 0).tolist()
            raise ConfigError(f"reference_gains: zero entries at positions {bad} cannot define a scale")
        ref.setflags(write=False)
        mags.setflags(write=False)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "magnitudes", mags)

    @property
    def dim(self) -> int:
        return self.reference.size

    @classmethod
    def unit(cls, dim: int) -> "ScalingSpec":
        return cls(np.ones(dim))

    def scaled(self, power: int) -> "ScalingSpec":
        """Reference multiplied elementwise by ``10**power``."""
        return ScalingSpec(self.reference * 10.0 ** power)


def decode(spec: ScalingSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != spec.dim:
        raise ConfigError(f"expected vectors of length {spec.dim}, got {v.shape[-1]}")
    return spec.magnitudes * v


def encode(spec: ScalingSpec, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != spec.dim:
        raise ConfigError(f"expected vectors of length {spec.dim}, got {w.shape[-1]}")
    return w / spec.magnitudes


class ScaledObjective:
    """``g(v) = f(decode(spec, v))``, optionally logging every ``(v, w)`` pair."""

    def __init__(self, spec: ScalingSpec, f: Callable, log: Optional[list] = None):
        self.spec = spec
        self.f = f
        self.log = log

    def __call__(self, v):
        w = decode(self.spec, v)
        if self.log is not None:
            self.log.append((np.array(v, dtype=float), w.copy()))
        return self.f(w)


def wrap_objective(spec: ScalingSpec, f: Callable, log: Optional[list] = None) -> ScaledObjective:
    return ScaledObjective(spec, f, log)

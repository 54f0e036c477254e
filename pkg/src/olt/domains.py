"""Closed convex domains and Euclidean projection onto them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WholeSpace:
    kind = "whole"

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(p, dtype=float)

    @property
    def bounded(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"kind": "whole"}


@dataclass(frozen=True, eq=False)
class Ball:
    center: np.ndarray
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    def project(self, p: np.ndarray) -> np.ndarray:
        """Radial projection; accepts a single point (d,) or a stack (m, d)."""
        p = np.asarray(p, dtype=float)
        diff = p - self.center
        dist = np.linalg.norm(diff, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(dist > self.radius, self.radius / dist, 1.0)
        return self.center + diff * factor

    @property
    def bounded(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "ball", "center": self.center.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(p, dtype=float), self.lo, self.hi)

    @property
    def bounded(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


DomainSpec = WholeSpace | Ball | Box


def project(p, domain: DomainSpec) -> np.ndarray:
    """Euclidean projection of ``p`` (a point or a stack of points) onto ``domain``."""
    return domain.project(p)


def domain_from_dict(data: dict | None) -> DomainSpec:
    if not data or data.get("kind", "whole") == "whole":
        return WholeSpace()
    kind = data["kind"]
    if kind == "ball":
        return Ball(data["center"], float(data["radius"]))
    if kind == "box":
        return Box(data["lo"], data["hi"])
    raise ValueError(f"unknown domain kind {kind!r}")

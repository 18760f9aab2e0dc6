"""Elementwise diffeomorphisms with exact inverse-Jacobian log-determinants.

Every transform acts on arrays whose leading axis is the coordinate axis, so a
single point has shape ``(D,)`` and an ensemble of ``N`` members has shape
``(D, N)``.  Log-determinants are returned with the leading axis reduced.

Transforms are frozen dataclasses and can be shared freely between threads and
processes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit

LOGISTIC_EPS = 1e-15


class DomainError(ValueError):
    """A point lies on or outside the image domain of a transform."""


class ClampWarning(RuntimeWarning):
    """Emitted when logistic inputs are clamped away from 0 or 1."""


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[0] != dim:
        raise ValueError(f"expected leading dimension {dim}, got shape {x.shape}")
    return x


class Transform:
    """Base class.  Subclasses set ``dim`` and implement the three maps."""

    dim: int

    def forward(self, x) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, y) -> np.ndarray:
        raise NotImplementedError

    def log_det_jacobian_inverse(self, y) -> np.ndarray:
        raise NotImplementedError

    def domain(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate open interval ``(lower, upper)`` of the image."""
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def in_domain(self, y) -> np.ndarray:
        """Boolean mask over members: all coordinates strictly inside."""
        y = _as_points(y, self.dim)
        lo, hi = self.domain()
        shape = (self.dim,) + (1,) * (y.ndim - 1)
        ok = (y > lo.reshape(shape)) & (y < hi.reshape(shape)) & np.isfinite(y)
        return ok.all(axis=0)

    def nudge_inside(self, y) -> np.ndarray:
        """Move values sitting exactly on a finite bound one ulp inward."""
        y = np.array(y, dtype=float)
        lo, hi = self.domain()
        shape = (self.dim,) + (1,) * (y.ndim - 1)
        lo = lo.reshape(shape)
        hi = hi.reshape(shape)
        inner_lo = np.where(np.isfinite(lo), np.nextafter(lo, np.inf), lo)
        inner_hi = np.where(np.isfinite(hi), np.nextafter(hi, -np.inf), hi)
        return np.clip(y, inner_lo, inner_hi)


def _check_inside(y: np.ndarray, lo: float, hi: float, name: str) -> None:
    bad = ~((y > lo) & (y < hi))
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        raise DomainError(
            f"{name} inverse undefined at index {tuple(int(i) for i in idx)}: "
            f"value {y[tuple(idx)]!r} not in ({lo}, {hi})"
        )


@dataclass(frozen=True)
class Identity(Transform):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be positive")

    def forward(self, x):
        return _as_points(x, self.dim).copy()

    def inverse(self, y):
        return _as_points(y, self.dim).copy()

    def log_det_jacobian_inverse(self, y):
        y = _as_points(y, self.dim)
        return np.zeros(y.shape[1:])

    def domain(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def to_dict(self):
        return {"kind": "identity", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Affine(Transform):
    """Elementwise ``x -> scale * x + shift``."""

    scale: np.ndarray
    shift: np.ndarray
    dim: int = field(init=False)

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float)).copy()
        shift = np.atleast_1d(np.asarray(self.shift, dtype=float)).copy()
        if shift.size == 1 and scale.size > 1:
            shift = np.full_like(scale, shift[0])
        if scale.shape != shift.shape or scale.ndim != 1:
            raise ValueError("scale and shift must be vectors of equal length")
        if np.any(scale == 0) or not np.all(np.isfinite(scale)):
            raise ValueError("affine scale entries must be finite and nonzero")
        scale.setflags(write=False)
        shift.setflags(write=False)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "dim", scale.size)

    def _col(self, v, ndim):
        return v.reshape((self.dim,) + (1,) * (ndim - 1))

    def forward(self, x):
        x = _as_points(x, self.dim)
        return self._col(self.scale, x.ndim) * x + self._col(self.shift, x.ndim)

    def inverse(self, y):
        y = _as_points(y, self.dim)
        return (y - self._col(self.shift, y.ndim)) / self._col(self.scale, y.ndim)

    def log_det_jacobian_inverse(self, y):
        y = _as_points(y, self.dim)
        return np.full(y.shape[1:], -np.sum(np.log(np.abs(self.scale))))

    def domain(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def to_dict(self):
        return {"kind": "affine", "scale": self.scale.tolist(), "shift": self.shift.tolist()}

    def __eq__(self, other):
        return (
            isinstance(other, Affine)
            and np.array_equal(self.scale, other.scale)
            and np.array_equal(self.shift, other.shift)
        )

    def __hash__(self):
        return hash(("affine", self.scale.tobytes(), self.shift.tobytes()))


@dataclass(frozen=True)
class Exp(Transform):
    """Elementwise exponential, R -> (0, inf)."""

    dim: int = 1

    def forward(self, x):
        return np.exp(_as_points(x, self.dim))

    def inverse(self, y):
        y = _as_points(y, self.dim)
        _check_inside(y, 0.0, np.inf, "exp")
        return np.log(y)

    def log_det_jacobian_inverse(self, y):
        y = _as_points(y, self.dim)
        _check_inside(y, 0.0, np.inf, "exp")
        return -np.sum(np.log(y), axis=0)

    def domain(self):
        return np.zeros(self.dim), np.full(self.dim, np.inf)

    def to_dict(self):
        return {"kind": "exp", "dim": self.dim}


@dataclass(frozen=True)
class Logistic(Transform):
    """Elementwise standard logistic, R -> (0, 1).

    The inverse clamps its input to ``[eps, 1 - eps]`` (``eps = 1e-15``) and
    warns with :class:`ClampWarning` when any coordinate was moved.
    """

    dim: int = 1

    def forward(self, x):
        return expit(_as_points(x, self.dim))

    def clamp_mask(self, y) -> np.ndarray:
        y = _as_points(y, self.dim)
        return (y < LOGISTIC_EPS) | (y > 1.0 - LOGISTIC_EPS)

    def _clamped(self, y):
        y = _as_points(y, self.dim)
        _check_inside(y, 0.0, 1.0, "logistic")
        mask = self.clamp_mask(y)
        if np.any(mask):
            warnings.warn(
                f"logistic inverse clamped {int(mask.sum())} coordinate(s) to [{LOGISTIC_EPS}, 1-{LOGISTIC_EPS}]",
                ClampWarning,
                stacklevel=3,
            )
            y = np.clip(y, LOGISTIC_EPS, 1.0 - LOGISTIC_EPS)
        return y

    def inverse(self, y):
        y = self._clamped(y)
        return np.log(y) - np.log1p(-y)

    def log_det_jacobian_inverse(self, y):
        y = self._clamped(y)
        return -np.sum(np.log(y) + np.log1p(-y), axis=0)

    def domain(self):
        return np.zeros(self.dim), np.ones(self.dim)

    def to_dict(self):
        return {"kind": "logistic", "dim": self.dim}


@dataclass(frozen=True)
class Composition(Transform):
    """``parts[0]`` is applied first on the way forward, last on the way back."""

    parts: tuple[Transform, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("composition needs at least one transform")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError(f"composition parts disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "dim", parts[0].dim)

    def forward(self, x):
        for p in self.parts:
            x = p.forward(x)
        return x

    def inverse(self, y):
        for p in reversed(self.parts):
            y = p.inverse(y)
        return y

    def log_det_jacobian_inverse(self, y):
        # each stage is evaluated at the pullback of y through the later stages
        total = 0.0
        for p in reversed(self.parts):
            total = total + p.log_det_jacobian_inverse(y)
            y = p.inverse(y)
        return total

    def domain(self):
        return self.parts[-1].domain()

    def to_dict(self):
        return {"kind": "composition", "parts": [p.to_dict() for p in self.parts]}


@dataclass(frozen=True)
class Partition(Transform):
    """Block transform acting on ``[state; obs]`` with the state block first."""

    state: Transform
    obs: Transform
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.state.dim + self.obs.dim)

    def _split(self, v):
        v = _as_points(v, self.dim)
        return v[: self.state.dim], v[self.state.dim :]

    def forward(self, x):
        a, b = self._split(x)
        return np.concatenate([self.state.forward(a), self.obs.forward(b)], axis=0)

    def inverse(self, y):
        a, b = self._split(y)
        return np.concatenate([self.state.inverse(a), self.obs.inverse(b)], axis=0)

    def log_det_jacobian_inverse(self, y):
        a, b = self._split(y)
        return self.state.log_det_jacobian_inverse(a) + self.obs.log_det_jacobian_inverse(b)

    def domain(self):
        (l1, h1), (l2, h2) = self.state.domain(), self.obs.domain()
        return np.concatenate([l1, l2]), np.concatenate([h1, h2])

    def to_dict(self):
        return {"kind": "partition", "state": self.state.to_dict(), "obs": self.obs.to_dict()}


def forward(t: Transform, x) -> np.ndarray:
    return t.forward(x)


def inverse(t: Transform, y) -> np.ndarray:
    return t.inverse(y)


def log_det_jacobian_inverse(t: Transform, y) -> np.ndarray:
    return t.log_det_jacobian_inverse(y)


def compose(parts) -> Transform:
    """Chain transforms; the first element is applied first."""
    parts = list(parts)
    if len(parts) == 1:
        return parts[0]
    return Composition(tuple(parts))


def partition(state_t: Transform, obs_t: Transform) -> Partition:
    return Partition(state_t, obs_t)


def stack(*blocks: Transform) -> Transform:
    """Concatenate transforms blockwise, e.g. ``stack(Exp(), Logistic())``."""
    if not blocks:
        raise ValueError("stack needs at least one block")
    out = blocks[0]
    for b in blocks[1:]:
        out = Partition(out, b)
    return out


def from_dict(d: dict[str, Any]) -> Transform:
    """Rebuild a transform from its JSON fragment (inverse of ``to_dict``)."""
    try:
        kind = d["kind"]
    except (TypeError, KeyError):
        raise ValueError(f"transform fragment needs a 'kind' field: {d!r}") from None
    if kind == "identity":
        return Identity(int(d.get("dim", 1)))
    if kind == "exp":
        return Exp(int(d.get("dim", 1)))
    if kind == "logistic":
        return Logistic(int(d.get("dim", 1)))
    if kind == "affine":
        return Affine(np.asarray(d["scale"], float), np.asarray(d["shift"], float))
    if kind == "composition":
        return Composition(tuple(from_dict(p) for p in d["parts"]))
    if kind == "partition":
        return Partition(from_dict(d["state"]), from_dict(d["obs"]))
    raise ValueError(f"unknown transform kind {kind!r}")

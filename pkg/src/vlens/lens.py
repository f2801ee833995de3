"""Lens coordinate charts for the repulsive/attractive harmonic potential.

The hyperbolic chart straightens the characteristics of the repulsive
harmonic potential and compactifies physical time to s in (-1, 1):

    forward:  (t, x, v) -> (tanh t,  x / cosh t,  v cosh t - x sinh t)
    inverse:  (s, q, p) -> (arctanh s,  q / sqrt(1-s^2),
                            s q / sqrt(1-s^2) + p sqrt(1-s^2))

The trigonometric flavor does the same for the attractive potential with
tan/cos/sin and domain |t| < pi/2.  Both are symplectic with unit Jacobian
determinant at every fixed time.  The time reparameterizations are

    time_dilation(s) = dt/ds = 1/(1-s^2),
    physical_time(s) = arctanh s = 0.5 ln((1+s)/(1-s)),

the second evaluated in the log1p form since every scattering diagnostic
lives at s -> 1 where naive arctanh loses digits.

All operations are pure and stateless; they are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ElectricField, ExtrapolationError


class LensDomainError(ValueError):
    """Coordinate outside the chart domain (|s| >= 1, or |t| >= pi/2 for trig)."""


def lens_time(t):
    """Compactified time s = tanh t of the hyperbolic chart."""
    return np.tanh(t)


def physical_time(s):
    """t = arctanh s via 0.5 (log1p(s) - log1p(-s)); accurate toward s = +-1."""
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) >= 1.0):
        raise LensDomainError("physical time requires |s| < 1")
    out = 0.5 * (np.log1p(s) - np.log1p(-s))
    return float(out) if out.ndim == 0 else out


def time_dilation(s):
    """dt/ds = 1/(1-s^2) along the hyperbolic chart."""
    s = np.asarray(s, dtype=float)
    out = 1.0 / ((1.0 - s) * (1.0 + s))
    return float(out) if out.ndim == 0 else out


def bracket(x):
    """Japanese bracket <x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.square(x))


def hyperbolic_forward(t, x, v):
    """Map physical (t, x, v) to lens (s, q, p); total in t, vectorized over x, v."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    ch = np.cosh(t)
    s = np.tanh(t)
    q = x / ch
    p = v * ch - x * np.sinh(t)
    return s, q, p


def hyperbolic_inverse(s, q, p):
    """Map lens (s, q, p) back to physical (t, x, v); requires |s| < 1."""
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) >= 1.0):
        raise LensDomainError(f"|s| must be < 1, got max |s| = {np.abs(s).max()}")
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    t = 0.5 * (np.log1p(s) - np.log1p(-s))
    root = np.sqrt((1.0 - s) * (1.0 + s))
    x = q / root
    v = s * q / root + p * root
    return t, x, v


def trig_forward(t, x, v):
    """Trigonometric-flavor forward map; requires |t| < pi/2."""
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) >= np.pi / 2):
        raise LensDomainError("trigonometric chart requires |t| < pi/2")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    s = np.tan(t)
    q = x / np.cos(t)
    p = x * np.sin(t) + v * np.cos(t)
    return s, q, p


def trig_inverse(s, q, p):
    """Inverse of the trigonometric chart (total in s)."""
    s = np.asarray(s, dtype=float)
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    t = np.arctan(s)
    root = np.sqrt(1.0 + s * s)   # 1/cos t
    x = q / root
    v = p * root - s * q / root
    return t, x, v


@dataclass(frozen=True)
class LensChart:
    """Invertible chart between physical (t, x, v) and lens (s, q, p) coordinates.

    flavor is "hyperbolic" (repulsive potential, s = tanh t) or
    "trigonometric" (attractive potential, s = tan t).  The dimension d is a
    runtime parameter: the grid solver fixes d = 2, the particle pipeline
    reuses the same chart at d = 3.
    """

    flavor: str = "hyperbolic"
    dimension: int = 2

    def __post_init__(self):
        if self.flavor not in ("hyperbolic", "trigonometric"):
            raise ValueError(f"unknown chart flavor {self.flavor!r}")
        if self.dimension < 2:
            raise ValueError("chart dimension must be >= 2")

    def forward(self, t, x, v):
        if self.flavor == "hyperbolic":
            return hyperbolic_forward(t, x, v)
        return trig_forward(t, x, v)

    def inverse(self, s, q, p):
        if self.flavor == "hyperbolic":
            return hyperbolic_inverse(s, q, p)
        return trig_inverse(s, q, p)

    def jacobian(self, t) -> np.ndarray:
        """The (x, v) -> (q, p) Jacobian at fixed time, a 2d x 2d block matrix.

        Hyperbolic:  [[I/cosh t, 0], [-I sinh t, I cosh t]]; determinant 1 and
        J^T Omega J = Omega with Omega the standard symplectic form.
        """
        d = self.dimension
        eye = np.eye(d)
        if self.flavor == "hyperbolic":
            a, b, c = 1.0 / np.cosh(t), -np.sinh(t), np.cosh(t)
        else:
            if abs(t) >= np.pi / 2:
                raise LensDomainError("trigonometric chart requires |t| < pi/2")
            a, b, c = 1.0 / np.cos(t), np.sin(t), np.cos(t)
        top = np.hstack([a * eye, np.zeros((d, d))])
        bot = np.hstack([b * eye, c * eye])
        return np.vstack([top, bot])


def symplectic_form(d: int) -> np.ndarray:
    """Omega = [[0, I], [-I, 0]] in d position + d momentum coordinates."""
    eye = np.eye(d)
    z = np.zeros((d, d))
    return np.block([[z, eye], [-eye, z]])


def field_scale_factor(t, d: int = 2):
    """Amplitude factor cosh(t)^(1-d) relating lens-frame and physical fields."""
    return np.cosh(t) ** (1 - d)


def pushforward_field(e_lens: ElectricField, t: float, d: int = 2,
                      at_points: np.ndarray | None = None):
    """Physical-frame field from a lens-frame field at physical time t.

    The rule is E_phys(t, x) = cosh(t)^(1-d) E_lens(tanh t, x / cosh t).  With
    no `at_points` the result is returned on the image grid (the lens grid
    scaled by cosh t), which requires no interpolation at all.  With
    `at_points`, the field is interpolated at the given physical points and
    an ExtrapolationError is raised when x / cosh t leaves the lens grid.
    """
    ch = float(np.cosh(t))
    amp = ch ** (1 - d)
    if at_points is None:
        return ElectricField(amp * e_lens.values, e_lens.extent * ch,
                             provenance=e_lens.provenance)
    pts = np.asarray(at_points, dtype=float) / ch
    if np.any(np.abs(pts) > e_lens.extent):
        raise ExtrapolationError("physical points map outside the lens grid")
    return amp * e_lens.at(pts)

"""Phase-space distribution container and advection primitives.

The solver state is a real field gamma(q1, q2, p1, p2) sampled on a tensor
grid [-Lq, Lq]^2 x [-Lp, Lp]^2.  Everything downstream (field solves, the
forward solver, the backward wave construction) works through the handful of
primitives defined here: Lebesgue norms, velocity moments

    rho(q) = int gamma^2 dp,      j(q) = int p gamma^2 dp,

tensor-product cubic interpolation, and semi-Lagrangian advection along a
supplied volume-preserving map.  Grids are immutable by convention; every
operation returns a new array or grid.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

VLNS_MAGIC = b"VLNS"
VLNS_VERSION = 1

#: samples on the outermost shell must stay below this for the compact
#: support assumption (boundary-free advection) to hold
DEFAULT_SUPPORT_FLOOR = 1e-14


class SupportViolation(RuntimeError):
    """Too many backtraced points left the grid, or boundary data is large."""


class GridFormatError(ValueError):
    """Raised for malformed VLNS binary dumps."""


@dataclass(frozen=True)
class DistributionGrid:
    """Real samples of a distribution on a rectangular 4D phase-space grid.

    values has shape (nq, nq, np, np), C order, axes (q1, q2, p1, p2).
    labels names the coordinate pair, ("q", "p") for the lens frame or
    ("w", "z") for the wave-operator frame.
    """

    values: np.ndarray
    extent_q: float
    extent_p: float
    labels: tuple[str, str] = ("q", "p")
    oob_fraction: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 4:
            raise ValueError(f"expected 4D sample array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid contains non-finite samples")
        object.__setattr__(self, "values", v)

    @property
    def n_q(self) -> int:
        return self.values.shape[0]

    @property
    def n_p(self) -> int:
        return self.values.shape[2]

    @property
    def q_axis(self) -> np.ndarray:
        return np.linspace(-self.extent_q, self.extent_q, self.n_q)

    @property
    def p_axis(self) -> np.ndarray:
        return np.linspace(-self.extent_p, self.extent_p, self.n_p)

    @property
    def h_q(self) -> float:
        return 2.0 * self.extent_q / (self.n_q - 1)

    @property
    def h_p(self) -> float:
        return 2.0 * self.extent_p / (self.n_p - 1)

    def with_values(self, values: np.ndarray, oob_fraction: float = 0.0) -> "DistributionGrid":
        return replace(self, values=values, oob_fraction=oob_fraction)

    def boundary_max(self) -> float:
        """Largest |sample| on the outermost grid shell."""
        v = np.abs(self.values)
        return max(
            v[0].max(), v[-1].max(), v[:, 0].max(), v[:, -1].max(),
            v[:, :, 0].max(), v[:, :, -1].max(), v[:, :, :, 0].max(), v[:, :, :, -1].max(),
        )

    def supported(self, floor: float = DEFAULT_SUPPORT_FLOOR) -> bool:
        return self.boundary_max() <= floor


@dataclass
class NormReport:
    """Norms tracked along a run: L2, sup, <p>^a-weighted sups, gradient sups."""

    l2: float
    sup: float
    weighted_sup: dict[int, float] = field(default_factory=dict)
    grad_q_sup: float = 0.0
    grad_p_sup: float = 0.0


def gaussian_grid(n_q: int, n_p: int, extent_q: float, extent_p: float,
                  amplitude: float = 1.0, width_q: float = 1.0, width_p: float = 1.0,
                  center_q=(0.0, 0.0), center_p=(0.0, 0.0),
                  labels=("q", "p"),
                  floor: float = DEFAULT_SUPPORT_FLOOR) -> DistributionGrid:
    """Separable Gaussian samples, truncated below `floor` to enforce compact support."""
    q = np.linspace(-extent_q, extent_q, n_q)
    p = np.linspace(-extent_p, extent_p, n_p)
    gq1 = np.exp(-((q - center_q[0]) / width_q) ** 2 / 2.0)
    gq2 = np.exp(-((q - center_q[1]) / width_q) ** 2 / 2.0)
    gp1 = np.exp(-((p - center_p[0]) / width_p) ** 2 / 2.0)
    gp2 = np.exp(-((p - center_p[1]) / width_p) ** 2 / 2.0)
    vals = amplitude * np.einsum("i,j,k,l->ijkl", gq1, gq2, gp1, gp2)
    vals[np.abs(vals) < floor * max(abs(amplitude), 1.0)] = 0.0
    return DistributionGrid(vals, extent_q, extent_p, labels=labels)


def _trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def lebesgue_norm(grid: DistributionGrid, r) -> float:
    """L2 (trapezoidal) or exact max-abs norm of the samples; r in {2, inf}."""
    if r == np.inf or r == "inf":
        return float(np.abs(grid.values).max(initial=0.0))
    if r != 2:
        raise ValueError(f"only r=2 and r=inf are supported, got {r!r}")
    wq = _trapezoid_weights(grid.n_q, grid.h_q)
    wp = _trapezoid_weights(grid.n_p, grid.h_p)
    sq = np.einsum("ijkl,i,j,k,l->", grid.values ** 2, wq, wq, wp, wp)
    return float(np.sqrt(sq))


def weighted_sup_norm(grid: DistributionGrid, a: int, variable: str = "p") -> float:
    """max over samples of <var>^a |gamma|, with <x> = sqrt(1+|x|^2).

    variable selects the weight: "p" (momentum-like, last two axes) or
    "q" (position-like, first two axes).
    """
    if a < 0:
        raise ValueError("weight exponent must be nonnegative")
    if a == 0:
        return lebesgue_norm(grid, np.inf)
    if variable.startswith("p") or variable.startswith("z"):
        ax = grid.p_axis
        w = (1.0 + ax[:, None] ** 2 + ax[None, :] ** 2) ** (a / 2.0)
        return float((np.abs(grid.values) * w[None, None, :, :]).max(initial=0.0))
    ax = grid.q_axis
    w = (1.0 + ax[:, None] ** 2 + ax[None, :] ** 2) ** (a / 2.0)
    return float((np.abs(grid.values) * w[:, :, None, None]).max(initial=0.0))


def moments(grid: DistributionGrid):
    """Velocity moments of gamma^2: density rho(q) and current j(q).

    rho = int gamma^2 dp,  j = int p gamma^2 dp, trapezoidal on the p axes.
    Returns (rho, j) with shapes (nq, nq) and (nq, nq, 2).
    """
    wp = _trapezoid_weights(grid.n_p, grid.h_p)
    g2 = grid.values ** 2
    rho = np.einsum("ijkl,k,l->ij", g2, wp, wp)
    pax = grid.p_axis
    j1 = np.einsum("ijkl,k,l->ij", g2, wp * pax, wp)
    j2 = np.einsum("ijkl,k,l->ij", g2, wp, wp * pax)
    return rho, np.stack([j1, j2], axis=-1)


# ----------------------------------------------------------------------
# cubic Lagrange interpolation
# ----------------------------------------------------------------------

def _cubic_weights(frac: np.ndarray):
    """4-tap Lagrange weights for nodes at offsets (-1, 0, 1, 2) from the base index.

    Reproduces polynomials up to degree 3 exactly.
    """
    t = frac
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0, w1, w2, w3


def _axis_base_frac(coord: np.ndarray, lo: float, h: float, n: int):
    """Base node index and fractional offset for 1D cubic interpolation.

    The base index is clamped to [1, n-3] so the 4-tap stencil stays inside;
    points outside the axis range are reported in the mask.
    """
    u = (coord - lo) / h
    outside = (u < 0.0) | (u > n - 1.0)
    base = np.floor(u).astype(np.int64)
    base = np.clip(base, 1, n - 3)
    frac = u - base
    return base, frac, outside


def sample(grid: DistributionGrid, points: np.ndarray):
    """Tensor-product cubic interpolation at scattered 4D points.

    points has shape (..., 4) ordered (q1, q2, p1, p2).  Returns
    (values, outside_mask); values are 0 outside the grid extents
    (compact-support convention).
    """
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, 4)
    n_q, n_p = grid.n_q, grid.n_p
    bases, fracs = [], []
    outside = np.zeros(flat.shape[0], dtype=bool)
    for axis in range(4):
        n = n_q if axis < 2 else n_p
        lo = -grid.extent_q if axis < 2 else -grid.extent_p
        h = grid.h_q if axis < 2 else grid.h_p
        b, f, out = _axis_base_frac(flat[:, axis], lo, h, n)
        bases.append(b)
        fracs.append(f)
        outside |= out
    weights = [np.stack(_cubic_weights(f), axis=-1) for f in fracs]  # each (N, 4)

    vals = np.zeros(flat.shape[0])
    v = grid.values
    # accumulate the 4^4 stencil; each term is one fancy-indexed gather
    for a in range(4):
        ia = bases[0] + (a - 1)
        wa = weights[0][:, a]
        for b in range(4):
            ib = bases[1] + (b - 1)
            wab = wa * weights[1][:, b]
            for c in range(4):
                ic = bases[2] + (c - 1)
                wabc = wab * weights[2][:, c]
                for d in range(4):
                    idd = bases[3] + (d - 1)
                    vals += wabc * weights[3][:, d] * v[ia, ib, ic, idd]
    vals[outside] = 0.0
    return vals.reshape(pts.shape[:-1]), outside.reshape(pts.shape[:-1])


def interpolate(grid: DistributionGrid, point) -> np.ndarray:
    """Cubic interpolation; points outside the extents evaluate to 0."""
    vals, _ = sample(grid, point)
    return vals


def advect(grid: DistributionGrid, displacement_map, max_oob_fraction: float = 0.05) -> DistributionGrid:
    """Semi-Lagrangian remap: new(x) = old(displacement_map(x)) on every node.

    displacement_map takes an (N, 4) array of node coordinates and returns the
    (N, 4) backtraced source points of a volume-preserving flow map.  Raises
    SupportViolation when more than max_oob_fraction of the backtraces leave
    the grid.
    """
    q = grid.q_axis
    p = grid.p_axis
    Q1, Q2, P1, P2 = np.meshgrid(q, q, p, p, indexing="ij")
    nodes = np.stack([Q1.ravel(), Q2.ravel(), P1.ravel(), P2.ravel()], axis=-1)
    src = np.asarray(displacement_map(nodes), dtype=float)
    vals, outside = sample(grid, src)
    frac = float(outside.mean())
    if frac > max_oob_fraction:
        raise SupportViolation(
            f"{frac:.1%} of backtraced points left the grid (limit {max_oob_fraction:.1%})")
    shape = grid.values.shape
    return grid.with_values(vals.reshape(shape), oob_fraction=frac)


# fast paths used by the solvers: axis-aligned shears ---------------------

def _shift_axis_cubic(values: np.ndarray, axis: int, shifts: np.ndarray,
                      h: float) -> np.ndarray:
    """Shift `values` along `axis` by a slice-wise constant displacement.

    shifts broadcasts against values.shape and must be constant along `axis`;
    entry s means the new field at node x equals the old field at x - s, with
    zero fill outside (compact support).  Used for the transport shear
    (q <- q - ds*p, shift depends on p) and the field kick (p-shift depends
    on q).
    """
    s_full = np.broadcast_to(shifts, values.shape)
    s = np.moveaxis(s_full, axis, -1)[..., 0].reshape(-1)
    v = np.moveaxis(values, axis, -1)
    lead_shape = v.shape[:-1]
    n = v.shape[-1]
    v2 = np.ascontiguousarray(v).reshape(-1, n)

    u = -s / h  # source offset in index units
    k = np.floor(u).astype(np.int64)
    frac = u - k
    w0, w1, w2, w3 = _cubic_weights(frac)

    idx = np.arange(n)[None, :] + k[:, None]
    out = np.zeros_like(v2)
    for off, w in ((-1, w0), (0, w1), (1, w2), (2, w3)):
        j = idx + off
        valid = (j >= 0) & (j < n)
        jj = np.clip(j, 0, n - 1)
        out += w[:, None] * np.take_along_axis(v2, jj, axis=1) * valid
    return np.moveaxis(out.reshape(*lead_shape, n), -1, axis)


def _shear_axis(v4: np.ndarray, q_axis: int, shifts: np.ndarray, h: float) -> np.ndarray:
    """Shift q-axis 0 or 1 by a displacement constant on slices of its p axis.

    shifts is indexed by the coupled p axis (2 for q1, 3 for q2).  Integer
    offsets are monotone in p, so offset groups are contiguous p ranges and
    every tap is a pure slice blend.
    """
    n = v4.shape[q_axis]
    p_axis = q_axis + 2
    u = -np.asarray(shifts) / h
    kint = np.floor(u).astype(np.int64)
    frac = u - kint
    weights = _cubic_weights(frac)            # each indexed by p
    out = np.zeros_like(v4)

    def psl(lo, hi):
        idx = [slice(None)] * 4
        idx[p_axis] = slice(lo, hi)
        return tuple(idx)

    def qsl(lo, hi, plo, phi):
        idx = [slice(None)] * 4
        idx[q_axis] = slice(lo, hi)
        idx[p_axis] = slice(plo, phi)
        return tuple(idx)

    bshape = [1, 1, 1, 1]
    breaks = np.flatnonzero(np.diff(kint)) + 1
    for lo, hi in zip(np.r_[0, breaks], np.r_[breaks, kint.size]):
        kv = int(kint[lo])
        for off, w in zip((-1, 0, 1, 2), weights):
            shift_amt = kv + off
            src_lo = max(0, shift_amt)
            src_hi = min(n, n + shift_amt)
            if src_lo >= src_hi:
                continue
            dst_lo = src_lo - shift_amt
            dst_hi = src_hi - shift_amt
            wshape = list(bshape)
            wshape[p_axis] = hi - lo
            wv = w[lo:hi].reshape(wshape)
            out[qsl(dst_lo, dst_hi, lo, hi)] += wv * v4[qsl(src_lo, src_hi, lo, hi)]
    return out


def shear_transport(grid: DistributionGrid, ds: float) -> DistributionGrid:
    """Exact free-streaming remap gamma(q, p) <- gamma(q - ds*p, p)."""
    pax = grid.p_axis
    v = _shear_axis(grid.values, 0, ds * pax, grid.h_q)
    v = _shear_axis(v, 1, ds * pax, grid.h_q)
    return grid.with_values(v)


def _kick_axis(v4: np.ndarray, axis: int, shifts: np.ndarray, h: float) -> np.ndarray:
    """Shift the p-axis `axis` (2 or 3) by the per-(q1,q2) displacement `shifts`.

    Smooth kicks produce only a handful of distinct integer offsets, so the
    remap groups rows by offset and uses pure slice blends.
    """
    n = v4.shape[axis]
    u = -shifts / h
    kint = np.floor(u).astype(np.int64)
    frac = u - kint
    weights = _cubic_weights(frac)            # each (nq, nq)
    out = np.zeros_like(v4)
    for kv in np.unique(kint):
        sel = np.nonzero(kint == kv)
        sub = v4[sel[0], sel[1]]              # (m, np, np)
        acc = np.zeros_like(sub)
        for off, w in zip((-1, 0, 1, 2), weights):
            shift_amt = int(kv) + off
            src_lo = max(0, shift_amt)
            src_hi = min(n, n + shift_amt)
            if src_lo >= src_hi:
                continue
            dst_lo = src_lo - shift_amt
            dst_hi = src_hi - shift_amt
            wcol = w[sel][:, None, None]
            if axis == 2:
                acc[:, dst_lo:dst_hi, :] += wcol * sub[:, src_lo:src_hi, :]
            else:
                acc[:, :, dst_lo:dst_hi] += wcol * sub[:, :, src_lo:src_hi]
        out[sel[0], sel[1]] = acc
    return out


def kick(grid: DistributionGrid, dp: np.ndarray) -> DistributionGrid:
    """Momentum remap gamma(q, p) <- gamma(q, p - dp(q)); dp has shape (nq, nq, 2)."""
    v = _kick_axis(grid.values, 2, dp[:, :, 0], grid.h_p)
    v = _kick_axis(v, 3, dp[:, :, 1], grid.h_p)
    return grid.with_values(v)


# ----------------------------------------------------------------------
# derivative-based checks
# ----------------------------------------------------------------------

def gradient_sup(grid: DistributionGrid, variable: str = "q", weight_exponent: int = 0) -> float:
    """Sup norm of the central-difference gradient in q-like or p-like axes."""
    if variable.startswith("q") or variable.startswith("w"):
        axes, h = (0, 1), grid.h_q
    else:
        axes, h = (2, 3), grid.h_p
    mags = np.zeros_like(grid.values)
    for ax in axes:
        d = np.gradient(grid.values, h, axis=ax)
        mags = np.maximum(mags, np.abs(d))
    if weight_exponent:
        tmp = DistributionGrid(mags, grid.extent_q, grid.extent_p, labels=grid.labels)
        return weighted_sup_norm(tmp, weight_exponent,
                                 "p" if variable.startswith(("p", "z")) else "q")
    g = float(mags.max(initial=0.0))
    return g


@dataclass
class InterpolationInequalityReport:
    weight_exponent: float
    lhs: float
    rhs: float
    ratio: float
    passed: bool


def interpolation_inequality_check(grid: DistributionGrid, ell: float,
                                   bound_constant: float = 2.0,
                                   variable: str = "p") -> InterpolationInequalityReport:
    """Check the weighted gradient interpolation inequality on grid data.

    Verifies  sup <q>^ell |grad_var f|  <=  C ( sup <q>^{2 ell} |f| + sup |grad_var^2 f| )
    with finite-difference derivatives.  For ell = 0 the sharper square-root
    form  sup|Df| <= C sqrt(sup|f| sup|D^2 f|)  is used.  A zero grid reports
    ratio 0 and passes.
    """
    axes = (2, 3) if variable.startswith("p") else (0, 1)
    h = grid.h_p if variable.startswith("p") else grid.h_q
    grads = [np.gradient(grid.values, h, axis=ax) for ax in axes]
    gmag = np.max(np.abs(grads), axis=0)

    second = 0.0
    for d in grads:
        for ax in axes:
            second = max(second, float(np.abs(np.gradient(d, h, axis=ax)).max(initial=0.0)))

    qax = grid.q_axis
    w = 1.0 + qax[:, None] ** 2 + qax[None, :] ** 2
    lhs = float((gmag * w[:, :, None, None] ** (ell / 2.0)).max(initial=0.0))
    if ell == 0:
        sup_f = lebesgue_norm(grid, np.inf)
        rhs = float(np.sqrt(sup_f * second))
    else:
        sup_wf = float((np.abs(grid.values) * w[:, :, None, None] ** ell).max(initial=0.0))
        rhs = sup_wf + second
    if rhs == 0.0:
        return InterpolationInequalityReport(ell, lhs, rhs, 0.0, lhs == 0.0)
    ratio = lhs / rhs
    return InterpolationInequalityReport(ell, lhs, rhs, ratio, ratio <= bound_constant)


def norm_report(grid: DistributionGrid, weight_exponents=(1, 2, 3)) -> NormReport:
    return NormReport(
        l2=lebesgue_norm(grid, 2),
        sup=lebesgue_norm(grid, np.inf),
        weighted_sup={a: weighted_sup_norm(grid, a, "p") for a in weight_exponents},
        grad_q_sup=gradient_sup(grid, "q"),
        grad_p_sup=gradient_sup(grid, "p"),
    )


# ----------------------------------------------------------------------
# binary dumps
# ----------------------------------------------------------------------

def save_vlns(grid: DistributionGrid, path) -> None:
    """Write the binary dump: magic, version, d, axis counts, extents, payload.

    Little-endian throughout: "VLNS", u32 version, u32 d, u32 point count per
    axis (2d of them), f64 half-extent per axis, then the row-major f64 samples.
    """
    with open(path, "wb") as fh:
        fh.write(VLNS_MAGIC)
        fh.write(struct.pack("<II", VLNS_VERSION, 2))
        fh.write(struct.pack("<4I", grid.n_q, grid.n_q, grid.n_p, grid.n_p))
        fh.write(struct.pack("<4d", grid.extent_q, grid.extent_q, grid.extent_p, grid.extent_p))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def load_vlns(path, labels=("q", "p")) -> DistributionGrid:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != VLNS_MAGIC:
            raise GridFormatError(f"bad magic {magic!r}")
        version, d = struct.unpack("<II", fh.read(8))
        if version != VLNS_VERSION:
            raise GridFormatError(f"unsupported format version {version}")
        if d != 2:
            raise GridFormatError(f"grid dumps support d=2 only, got d={d}")
        counts = struct.unpack("<4I", fh.read(16))
        extents = struct.unpack("<4d", fh.read(32))
        if counts[0] != counts[1] or counts[2] != counts[3]:
            raise GridFormatError("per-axis point counts must match within q and p pairs")
        payload = fh.read(8 * int(np.prod(counts)))
        vals = np.frombuffer(payload, dtype="<f8").reshape(counts).copy()
    return DistributionGrid(vals, extents[0], extents[2], labels=tuple(labels))

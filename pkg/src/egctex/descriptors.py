"""Handcrafted texture descriptors: uniform LBP, robust LBP and LPQ.

All three produce L1-normalized histograms. Three-channel images are
described channel by channel; the per-channel histograms are concatenated
and renormalized so the result still sums to one.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .imaging import ImageBuffer

# Interpolated neighbours and STFT responses that are mathematically equal
# to the reference carry ~1e-12 of float error; compare with this slack so
# ties land on the ">= 0" side deterministically.
TIE_TOLERANCE = 1e-9


class DescriptorId(str, enum.Enum):
    LBP = "LBP"
    RLBP = "RLBP"
    LPQ = "LPQ"


@dataclass(frozen=True)
class LbpParams:
    P: int = 8
    R: float = 2.0

    def __post_init__(self):
        if not 4 <= self.P <= 16:
            raise ValueError(f"P must be in [4, 16], got {self.P}")
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")

    @property
    def n_bins(self) -> int:
        return self.P * (self.P - 1) + 3

    def as_dict(self):
        return {"P": self.P, "R": self.R}


@dataclass(frozen=True)
class LpqParams:
    Nx: int = 7
    decorrelate: bool = False
    rho: float = 0.9

    def __post_init__(self):
        if self.Nx < 3 or self.Nx % 2 == 0:
            raise ValueError(f"Nx must be odd and >= 3, got {self.Nx}")

    @property
    def a(self) -> float:
        return 1.0 / self.Nx

    @property
    def n_bins(self) -> int:
        return 256

    def as_dict(self):
        d = {"Nx": self.Nx}
        if self.decorrelate:
            d.update(decorrelate=True, rho=self.rho)
        return d


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    descriptor_id: DescriptorId
    params: LbpParams | LpqParams = field(compare=False)

    def __len__(self):
        return len(self.values)


class ImageTooSmallError(ValueError):
    pass


# --------------------------------------------------------------------------
# binary pattern tables


def transitions(code: int, P: int) -> int:
    """Number of 0/1 changes when the P-bit code is read as a circular list."""
    rotated = ((code >> 1) | ((code & 1) << (P - 1)))
    return bin(code ^ rotated).count("1")


def is_uniform(code: int, P: int = 8) -> bool:
    return transitions(code, P) <= 2


@lru_cache(maxsize=None)
def uniform_table(P: int) -> np.ndarray:
    """code -> bin. Uniform codes get bins in ascending code order, the rest share the last bin."""
    table = np.empty(1 << P, dtype=np.int64)
    nonuniform_bin = P * (P - 1) + 2
    b = 0
    for code in range(1 << P):
        if is_uniform(code, P):
            table[code] = b
            b += 1
        else:
            table[code] = nonuniform_bin
    assert b == nonuniform_bin
    table.setflags(write=False)
    return table


def repair_code(code: int, P: int) -> int:
    """Single-bit repair used by RLBP.

    A non-uniform code that turns uniform after flipping one bit is mapped
    to that uniform code. When several bits qualify the lowest index wins.
    Codes that cannot be repaired (and uniform codes) are returned as is.
    """
    if is_uniform(code, P):
        return code
    for k in range(P):
        flipped = code ^ (1 << k)
        if is_uniform(flipped, P):
            return flipped
    return code


@lru_cache(maxsize=None)
def robust_table(P: int) -> np.ndarray:
    uni = uniform_table(P)
    table = np.array([uni[repair_code(c, P)] for c in range(1 << P)], dtype=np.int64)
    table.setflags(write=False)
    return table


# --------------------------------------------------------------------------
# LBP / RLBP


def neighbor_offsets(P: int, R: float) -> list[tuple[float, float]]:
    """(dy, dx) of the P circular samples, counter-clockwise from the +x axis."""
    out = []
    for k in range(P):
        theta = 2.0 * math.pi * k / P
        out.append((round(-R * math.sin(theta), 10) + 0.0, round(R * math.cos(theta), 10) + 0.0))
    return out


def lbp_codes(plane: np.ndarray, params: LbpParams) -> np.ndarray:
    """Raw P-bit codes for every interior pixel of a 2-D array."""
    plane = np.asarray(plane, dtype=np.float64)
    m = math.ceil(params.R)
    H, W = plane.shape
    if H < 2 * m + 1 or W < 2 * m + 1:
        raise ImageTooSmallError(f"image {W}x{H} too small for radius {params.R}")
    h, w = H - 2 * m, W - 2 * m
    center = plane[m:m + h, m:m + w]
    codes = np.zeros((h, w), dtype=np.int64)

    def shifted(oy, ox):
        return plane[m + oy:m + oy + h, m + ox:m + ox + w]

    for k, (dy, dx) in enumerate(neighbor_offsets(params.P, params.R)):
        y0, x0 = math.floor(dy), math.floor(dx)
        fy, fx = dy - y0, dx - x0
        value = None
        for oy, ox, wt in (
            (y0, x0, (1 - fy) * (1 - fx)),
            (y0, x0 + 1, (1 - fy) * fx),
            (y0 + 1, x0, fy * (1 - fx)),
            (y0 + 1, x0 + 1, fy * fx),
        ):
            if wt == 0.0:
                continue
            term = wt * shifted(oy, ox)
            value = term if value is None else value + term
        codes |= ((value - center) >= -TIE_TOLERANCE).astype(np.int64) << k
    return codes


def _histogram(bins: np.ndarray, n_bins: int) -> np.ndarray:
    hist = np.bincount(bins.ravel(), minlength=n_bins).astype(np.float64)
    return hist / hist.sum()


def _per_channel(img: ImageBuffer, fn) -> np.ndarray:
    hists = [fn(img.channel(c)) for c in range(img.channels)]
    if len(hists) == 1:
        return hists[0]
    cat = np.concatenate(hists)
    return cat / cat.sum()


def lbp(img: ImageBuffer, params: LbpParams = LbpParams()) -> FeatureVector:
    """Uniform LBP histogram (59 bins for P=8)."""
    table = uniform_table(params.P)
    values = _per_channel(img, lambda p: _histogram(table[lbp_codes(p, params)], params.n_bins))
    return FeatureVector(values, DescriptorId.LBP, params)


def rlbp(img: ImageBuffer, params: LbpParams = LbpParams()) -> FeatureVector:
    """Robust LBP: one-bit-repairable patterns are credited to their uniform bin."""
    table = robust_table(params.P)
    values = _per_channel(img, lambda p: _histogram(table[lbp_codes(p, params)], params.n_bins))
    return FeatureVector(values, DescriptorId.RLBP, params)


# --------------------------------------------------------------------------
# LPQ


def _stft_filters(Nx: int):
    r = (Nx - 1) // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    w0 = np.ones(Nx, dtype=np.complex128)
    w1 = np.exp(-2j * np.pi * x / Nx)
    w2 = np.conj(w1)
    return w0, w1, w2


def _correlate_valid(plane: np.ndarray, row_filter: np.ndarray, col_filter: np.ndarray) -> np.ndarray:
    """Complex separable window sum: sum_{dy,dx} I[y+dy, x+dx] * col[dy] * row[dx]."""
    r = (len(row_filter) - 1) // 2
    out = []
    for part_r, part_c, sign in (
        (row_filter.real, col_filter.real, 1.0),
        (row_filter.imag, col_filter.imag, -1.0),
        (row_filter.real, col_filter.imag, 1j),
        (row_filter.imag, col_filter.real, 1j),
    ):
        tmp = ndimage.correlate1d(plane, part_r, axis=1, mode="constant")
        tmp = ndimage.correlate1d(tmp, part_c, axis=0, mode="constant")
        out.append(sign * tmp)
    full = out[0] + out[1] + out[2] + out[3]
    H, W = plane.shape
    return full[r:H - r, r:W - r]


def lpq_responses(plane: np.ndarray, params: LpqParams) -> np.ndarray:
    """Eight real STFT components per valid pixel, shape (h, w, 8).

    Order: Re F(u1..u4) then Im F(u1..u4) with u1=(a,0), u2=(0,a),
    u3=(a,a), u4=(a,-a); the first coordinate runs along image columns.
    """
    plane = np.asarray(plane, dtype=np.float64)
    Nx = params.Nx
    if plane.shape[0] < Nx or plane.shape[1] < Nx:
        raise ImageTooSmallError(f"image {plane.shape[1]}x{plane.shape[0]} smaller than window {Nx}")
    w0, w1, w2 = _stft_filters(Nx)
    f1 = _correlate_valid(plane, w1, w0)
    f2 = _correlate_valid(plane, w0, w1)
    f3 = _correlate_valid(plane, w1, w1)
    f4 = _correlate_valid(plane, w1, w2)
    stack = [f1.real, f2.real, f3.real, f4.real, f1.imag, f2.imag, f3.imag, f4.imag]
    return np.stack(stack, axis=-1)


@lru_cache(maxsize=None)
def _whitening(Nx: int, rho: float) -> np.ndarray:
    """Whitening transform for a Gaussian pixel model with correlation rho**distance."""
    w0, w1, w2 = _stft_filters(Nx)
    yy, xx = np.meshgrid(np.arange(Nx), np.arange(Nx), indexing="ij")
    pts = np.column_stack([yy.ravel(), xx.ravel()]).astype(np.float64)
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    cov = rho ** dist
    # 2-D kernels indexed [dy, dx]
    q = [np.outer(w0, w1), np.outer(w1, w0), np.outer(w1, w1), np.outer(w2, w1)]
    M = np.vstack([k.real.ravel() for k in q] + [k.imag.ravel() for k in q])
    D = M @ cov @ M.T
    # tiny diagonal perturbation keeps singular vectors well ordered
    A = np.diag(1.0 + 1e-6 * np.arange(8, 0, -1) / 8)
    _, _, Vt = np.linalg.svd(A @ D @ A)
    return Vt


def lpq_codes(plane: np.ndarray, params: LpqParams) -> np.ndarray:
    resp = lpq_responses(plane, params)
    if params.decorrelate:
        resp = resp @ _whitening(params.Nx, params.rho).T
    bits = resp >= -TIE_TOLERANCE
    weights = 1 << np.arange(8, dtype=np.int64)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def lpq(img: ImageBuffer, params: LpqParams = LpqParams()) -> FeatureVector:
    """256-bin histogram of LPQ codes over the valid window region."""
    values = _per_channel(img, lambda p: _histogram(lpq_codes(p, params), 256))
    return FeatureVector(values, DescriptorId.LPQ, params)


def describe(img: ImageBuffer, descriptor: str, params=None) -> FeatureVector:
    """Dispatch by descriptor name ("LBP", "RLBP", "LPQ")."""
    kind = DescriptorId(descriptor.upper())
    if kind is DescriptorId.LPQ:
        return lpq(img, params if params is not None else LpqParams())
    params = params if params is not None else LbpParams()
    return lbp(img, params) if kind is DescriptorId.LBP else rlbp(img, params)


def params_from_dict(descriptor: str, d: dict | None):
    d = dict(d or {})
    if DescriptorId(descriptor.upper()) is DescriptorId.LPQ:
        return LpqParams(**d)
    return LbpParams(**d)

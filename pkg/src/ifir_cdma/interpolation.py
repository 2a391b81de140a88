"""Decimation and interpolation algebra for the reduced-rank receiver.

Conventions used throughout the package (all modules share them):

* the segment matrix ``Re`` is N_I x M_red with ``Re[n, s] = r[s*L + n]``
  (zero for indices past the end of r),
* the projected vector is ``rbar = Re.T @ conj(v)``,
* the interpolator image of the filter is ``u = Re @ conj(w)``,
* the receiver output is ``x = v^H Re conj(w) = w^H rbar = v^H u``.

The bilinear identity ``v^H Re conj(w) == w^H (Re^T conj(v))`` is exact,
so either evaluation order may be used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DecimationOperator:
    """Keep-one-in-L sample selector for length-M vectors.

    Row m of the (conceptual) selection matrix picks sample m*L.  The
    reduced dimension is round(M/L), capped so the last kept index stays
    inside the vector; rows are orthonormal unit selectors, hence
    D D^H = I.
    """

    m: int
    l: int
    indices: np.ndarray = field(compare=False)

    @property
    def m_red(self) -> int:
        return self.indices.size

    def decimate(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x)[..., self.indices]

    def expand(self, y: np.ndarray) -> np.ndarray:
        """Adjoint D^H: place reduced samples back on the coarse grid."""
        out = np.zeros(self.m, dtype=np.asarray(y).dtype)
        out[self.indices] = y
        return out

    def matrix(self) -> np.ndarray:
        d = np.zeros((self.m_red, self.m))
        d[np.arange(self.m_red), self.indices] = 1.0
        return d


def make_decimation(m: int, l: int) -> DecimationOperator:
    """Decimation operator for length-m vectors, factor l.

    Non-integer m/l is rounded to the nearest integer (half away from
    zero) and then clipped so every selected index is in range.
    """
    if l < 1 or m < l:
        raise ValueError(f"need m >= l >= 1, got m={m}, l={l}")
    m_red = int(np.floor(m / l + 0.5))
    m_red = max(m_red, 1)
    while (m_red - 1) * l >= m:
        m_red -= 1
    return DecimationOperator(m=m, l=l, indices=np.arange(m_red) * l)


def build_re_matrix(r: np.ndarray, n_i: int, dec: DecimationOperator) -> np.ndarray:
    """Segment matrix: column s is the length-n_i slice of r starting at s*L.

    Slices reaching past the end of r are zero padded, which keeps the
    bilinear receiver output defined for every (L, n_i) combination.
    """
    r = np.asarray(r)
    need = int(dec.indices[-1]) + n_i
    if need > r.size:
        rp = np.zeros(need, dtype=complex)
        rp[:r.size] = r
    else:
        rp = r
    return rp[dec.indices[None, :] + np.arange(n_i)[:, None]]


def interpolate_then_decimate(v: np.ndarray, r: np.ndarray,
                              dec: DecimationOperator) -> np.ndarray:
    """Projected interpolated vector rbar = Re^T conj(v).

    Equals running the anticausal FIR y[t] = sum_n conj(v[n]) r[t+n] and
    keeping every L-th output; with a unit impulse interpolator it is
    plain decimation.
    """
    v = np.asarray(v)
    if not np.any(v):
        raise ValueError("interpolator must be nonzero")
    re = build_re_matrix(r, v.size, dec)
    return re.T @ v.conj()


@dataclass
class ReceiverState:
    """Interpolator v (length N_I) and reduced-rank filter w (length M_red)."""

    v: np.ndarray
    w: np.ndarray

    @property
    def n_i(self) -> int:
        return self.v.size


def receiver_output(state: ReceiverState, r: np.ndarray,
                    dec: DecimationOperator) -> complex:
    """Bilinear receiver output x = w^H (Re^T conj(v))."""
    rbar = interpolate_then_decimate(state.v, r, dec)
    return complex(np.vdot(state.w, rbar))


def detect(x: complex) -> float:
    """Symbol decision sgn(Re(x)); zero breaks the tie as +1."""
    return 1.0 if x.real >= 0.0 else -1.0

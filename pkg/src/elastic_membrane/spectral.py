"""Fourier pseudo-spectral calculus on the periodic rectangle [0, l1) x [0, l2).

Fields are plain float64 arrays whose last two axes are (x1, x2) samples;
any leading axes (vector components, time stamps) are carried along.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with cached wavenumbers.

    Parameters
    ----------
    n1, n2 : int
        Even sample counts (at least 8) along x1 and x2.
    l1, l2 : float
        Periods of the rectangle.
    """

    n1: int
    n2: int
    l1: float = 2 * np.pi
    l2: float = 2 * np.pi
    _k: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("periods must be positive")
        m1 = np.fft.fftfreq(self.n1, 1.0 / self.n1)
        m2 = np.arange(self.n2 // 2 + 1, dtype=float)
        k1 = (2 * np.pi / self.l1) * m1[:, None]
        k2 = (2 * np.pi / self.l2) * m2[None, :]
        # odd derivatives drop the Nyquist mode
        k1_odd = np.where(np.abs(m1[:, None]) == self.n1 // 2, 0.0, k1)
        k2_odd = np.where(m2[None, :] == self.n2 // 2, 0.0, k2)
        ksq = k1**2 + k2**2
        keep = (np.abs(m1[:, None]) < self.n1 / 3) & (m2[None, :] < self.n2 / 3)
        weight = np.full(m2.shape, 2.0)
        weight[0] = 1.0
        weight[-1] = 1.0
        object.__setattr__(self, "_k", {
            "ik1": 1j * k1_odd,
            "ik2": 1j * k2_odd,
            "ksq": ksq,
            "keep": keep,
            "weight": np.broadcast_to(weight[None, :], ksq.shape),
            "kmax": float(np.sqrt(ksq.max())),
        })

    # -- sampling ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def h1(self) -> float:
        return self.l1 / self.n1

    @property
    def h2(self) -> float:
        return self.l2 / self.n2

    @property
    def area(self) -> float:
        return self.l1 * self.l2

    @property
    def kmax(self) -> float:
        return self._k["kmax"]

    @property
    def ksq(self) -> np.ndarray:
        return self._k["ksq"]

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        x1 = self.l1 * np.arange(self.n1) / self.n1
        x2 = self.l2 * np.arange(self.n2) / self.n2
        return np.meshgrid(x1, x2, indexing="ij")

    # -- transforms -------------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfft2(f, axes=(-2, -1))

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfft2(fh, s=self.shape, axes=(-2, -1))

    def apply(self, f: np.ndarray, multiplier: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * multiplier)

    # -- differential operators -------------------------------------------
    def dx(self, f: np.ndarray) -> np.ndarray:
        """Derivative along x1 (alpha)."""
        return self.apply(f, self._k["ik1"])

    def dy(self, f: np.ndarray) -> np.ndarray:
        """Derivative along x2 (beta)."""
        return self.apply(f, self._k["ik2"])

    def grad(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fh = self.fft(f)
        return self.ifft(fh * self._k["ik1"]), self.ifft(fh * self._k["ik2"])

    def hessian(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (f_aa, f_ab, f_bb), each built from the odd-derivative symbols."""
        fh = self.fft(f)
        ik1, ik2 = self._k["ik1"], self._k["ik2"]
        return self.ifft(fh * ik1 * ik1), self.ifft(fh * ik1 * ik2), self.ifft(fh * ik2 * ik2)

    def lap(self, f: np.ndarray) -> np.ndarray:
        return self.apply(f, -self._k["ksq"])

    def inv_shifted_lap(self, f: np.ndarray, c: float) -> np.ndarray:
        """Solve (lap - c) u = f."""
        if not c > 0:
            raise ValueError(f"shift must be positive, got {c}")
        return self.apply(f, 1.0 / (-self._k["ksq"] - c))

    def poisson_meanzero(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Solve lap u = f - mean(f) with mean(u) = 0.

        Returns the solution and the subtracted mean (per leading index).
        """
        fh = self.fft(f)
        mean = fh[..., 0, 0].real / (self.n1 * self.n2)
        ksq = self._k["ksq"]
        inv = np.zeros_like(ksq)
        np.divide(-1.0, ksq, out=inv, where=ksq > 0)
        return self.ifft(fh * inv), mean

    def inv_div_grad(self, f: np.ndarray) -> np.ndarray:
        """Mean-zero u with dx(dx u) + dy(dy u) = f on every mode the composition reaches.

        The composition of odd derivatives misses the four modes whose
        indices are 0 or n/2 along both axes; their content is dropped.
        """
        sym = (self._k["ik1"] ** 2 + self._k["ik2"] ** 2).real
        inv = np.zeros_like(sym)
        np.divide(1.0, sym, out=inv, where=sym != 0)
        return self.apply(f, inv)

    # -- reductions ---------------------------------------------------------
    def mean(self, f: np.ndarray) -> np.ndarray:
        return np.mean(f, axis=(-2, -1))

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return np.sum(f, axis=(-2, -1)) * (self.h1 * self.h2)

    def sobolev_norm(self, f: np.ndarray, s: float) -> float:
        """Inhomogeneous H^s norm, sum over any leading components."""
        if s < 0:
            raise ValueError(f"Sobolev index must be nonnegative, got {s}")
        fh = self.fft(f) / (self.n1 * self.n2)
        w = self._k["weight"] * (1.0 + self._k["ksq"]) ** s
        return float(np.sqrt(np.sum(w * np.abs(fh) ** 2) * self.area))

    def l2_norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(np.sum(f * f) * self.h1 * self.h2))

    # -- filtering -----------------------------------------------------------
    def dealias(self, f: np.ndarray) -> np.ndarray:
        """Zero every mode with |m| >= n/3 along either axis."""
        return self.apply(f, self._k["keep"])

    def truncate(self, f: np.ndarray, m1: int, m2: int | None = None) -> np.ndarray:
        """Keep only modes with |m| <= m1 (and <= m2 along x2)."""
        m2 = m1 if m2 is None else m2
        mm1 = np.abs(np.fft.fftfreq(self.n1, 1.0 / self.n1))[:, None]
        mm2 = np.arange(self.n2 // 2 + 1)[None, :]
        return self.apply(f, (mm1 <= m1) & (mm2 <= m2))


def random_field(grid: Grid, rng: np.random.Generator, band: int, decay: float = 0.0,
                 rms: float = 1.0) -> np.ndarray:
    """Random real field with modes |m| <= band and amplitudes (1+|m|^2)^(-decay/2).

    The result is rescaled to the requested root-mean-square value.
    """
    mm1 = np.fft.fftfreq(grid.n1, 1.0 / grid.n1)[:, None]
    mm2 = np.arange(grid.n2 // 2 + 1)[None, :]
    mask = (np.abs(mm1) <= band) & (mm2 <= band)
    amp = (1.0 + mm1**2 + mm2**2) ** (-decay / 2) * mask
    shape = amp.shape
    coef = amp * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    coef[0, 0] = coef[0, 0].real
    f = grid.ifft(coef)
    f -= f.mean()
    s = np.sqrt(np.mean(f * f))
    return f * (rms / s) if s > 0 else f

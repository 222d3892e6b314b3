"""Linear mixing model: endmember and abundance containers, mixing, noise.

Every pixel spectrum is modeled as a convex combination of a few material
spectra (endmembers): y = M a + n, with the abundance vector a constrained
to the unit simplex (non-negative, summing to one).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .cube import PixelMatrix
from .errors import ShapeError

__all__ = ["EndmemberMatrix", "AbundanceMatrix", "mix", "add_noise_snr"]

# entries in [-ANC_CLAMP, 0) are treated as roundoff and clamped to zero
ANC_CLAMP = 1e-12
ASC_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EndmemberMatrix:
    """Material spectra, one column per endmember, shape (bands, endmembers).

    Args:
        values: (bands, endmembers) spectra.  Reflectance outside [0, 1]
            is allowed but draws a warning; an all-zero column or two
            bitwise-identical columns are errors.
        names: optional per-endmember labels, same length as the columns.
    """

    values: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"endmembers must be 2-d, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("endmember spectra must be finite")
        norms = np.linalg.norm(arr, axis=0)
        if np.any(norms == 0.0):
            raise ValueError("endmember column is all zero")
        for i in range(arr.shape[1]):
            for j in range(i + 1, arr.shape[1]):
                if np.array_equal(arr[:, i], arr[:, j]):
                    raise ValueError(f"endmember columns {i} and {j} are identical")
        if arr.min() < 0.0 or arr.max() > 1.0:
            warnings.warn("endmember values fall outside [0, 1]", stacklevel=2)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        if self.names is not None:
            names = tuple(str(n) for n in self.names)
            if len(names) != arr.shape[1]:
                raise ShapeError("one name per endmember required")
            object.__setattr__(self, "names", names)

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class AbundanceMatrix:
    """Per-pixel abundance fractions, shape (endmembers, pixels).

    Columns must lie on the unit simplex: entries >= 0 and each column
    summing to one within ``asc_tol``.  Entries in [-1e-12, 0) are clamped
    to zero at construction; anything more negative is an error.

    Args:
        values: (endmembers, pixels) fractions.
        spatial_rows: image rows the pixel columns unfold from.
        spatial_cols: image cols; rows * cols must equal pixels.
        asc_tol: sum-to-one tolerance.  The default is the in-memory
            contract; readers of 32-bit files pass a looser value.
    """

    values: np.ndarray
    spatial_rows: int
    spatial_cols: int
    asc_tol: float = ASC_TOL

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, order="C")
        if arr.ndim != 2:
            raise ShapeError(f"abundances must be 2-d, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("abundances must be finite")
        if self.spatial_rows * self.spatial_cols != arr.shape[1]:
            raise ShapeError(
                f"{arr.shape[1]} pixels cannot fill a "
                f"{self.spatial_rows}x{self.spatial_cols} image"
            )
        low = arr.min()
        if low < -ANC_CLAMP:
            raise ValueError(f"abundance {low} is negative beyond roundoff")
        if low < 0.0:
            arr[arr < 0.0] = 0.0
        sums = arr.sum(axis=0)
        worst = np.abs(sums - 1.0).max() if sums.size else 0.0
        if worst > self.asc_tol:
            raise ValueError(
                f"abundance columns must sum to 1 within {self.asc_tol:g}, "
                f"worst deviation {worst:.3e}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def endmembers(self) -> int:
        return self.values.shape[0]

    @property
    def pixels(self) -> int:
        return self.values.shape[1]


def mix(endmembers: EndmemberMatrix, abundances: AbundanceMatrix) -> PixelMatrix:
    """Forward model: spectra for every pixel, Y = M A.

    Returns:
        PixelMatrix of shape (bands, pixels) carrying the abundance grid's
        spatial dimensions.
    """
    if endmembers.count != abundances.endmembers:
        raise ShapeError(
            f"{endmembers.count} endmember columns vs "
            f"{abundances.endmembers} abundance rows"
        )
    y = endmembers.values @ abundances.values
    return PixelMatrix(y, abundances.spatial_rows, abundances.spatial_cols)


def add_noise_snr(clean: PixelMatrix, snr_db: float, seed: int) -> PixelMatrix:
    """Add white Gaussian noise at a target signal-to-noise ratio.

    The noise variance is set from the signal energy,
    sigma^2 = ||Y||_F^2 / (size * 10^(snr_db/10)), so the expected realized
    SNR matches the target.  Draws come from numpy's default_rng (PCG64
    generator, ziggurat normal sampler), so a given seed reproduces the
    same noise bit for bit across runs and platforms with the same numpy.

    Args:
        clean: noiseless spectra.
        snr_db: target SNR in dB; ``inf`` returns the input unchanged.
        seed: generator seed.
    """
    if np.isinf(snr_db):
        return PixelMatrix(clean.values, clean.spatial_rows, clean.spatial_cols)
    energy = float(np.sum(clean.values**2))
    sigma = np.sqrt(energy / (clean.values.size * 10.0 ** (snr_db / 10.0)))
    rng = np.random.default_rng(seed)
    noisy = clean.values + sigma * rng.standard_normal(clean.values.shape)
    return PixelMatrix(noisy, clean.spatial_rows, clean.spatial_cols)

"""Quality metrics for abundance estimates and reconstructions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cube import PixelMatrix
from .errors import ShapeError
from .model import AbundanceMatrix, EndmemberMatrix, mix

__all__ = ["rmse", "psnr", "reconstruction_error", "MetricsReport", "evaluate"]


def rmse(truth: AbundanceMatrix, estimate: AbundanceMatrix) -> float:
    """Root mean square abundance error, averaged over pixels and endmembers.

    Zero exactly when the two matrices are identical.
    """
    if truth.values.shape != estimate.values.shape:
        raise ShapeError(
            f"abundance shapes differ: {truth.values.shape} vs {estimate.values.shape}"
        )
    diff = estimate.values - truth.values
    return float(np.sqrt(np.mean(diff**2)))


def _psnr_parts(estimate: PixelMatrix, reference: PixelMatrix) -> tuple[float, float]:
    if estimate.values.shape != reference.values.shape:
        raise ShapeError(
            f"pixel matrix shapes differ: {estimate.values.shape} vs "
            f"{reference.values.shape}"
        )
    peak = float(estimate.values.max())
    # squared error summed over everything, divided by the pixel count only
    # (per-pixel spectral error is summed, not averaged, over channels)
    mse = float(np.sum((estimate.values - reference.values) ** 2) / estimate.pixels)
    return peak, mse


def psnr(estimate: PixelMatrix, reference: PixelMatrix) -> float:
    """Peak signal-to-noise ratio of a reconstruction, in dB.

    The peak is taken from the estimate under evaluation.  A perfect match
    returns ``inf``; report the peak alongside when comparing runs, since
    it is data-dependent.
    """
    peak, mse = _psnr_parts(estimate, reference)
    if mse == 0.0:
        return math.inf
    if peak <= 0.0:
        return -math.inf
    return 10.0 * math.log10(peak * peak / mse)


def reconstruction_error(observed: PixelMatrix, reconstruction: PixelMatrix) -> float:
    """Root mean square spectral residual between observation and model fit."""
    if observed.values.shape != reconstruction.values.shape:
        raise ShapeError(
            f"pixel matrix shapes differ: {observed.values.shape} vs "
            f"{reconstruction.values.shape}"
        )
    diff = reconstruction.values - observed.values
    return float(np.sqrt(np.mean(diff**2)))


@dataclass(frozen=True)
class MetricsReport:
    """Bundle of run metrics; abundance metrics are None without ground truth.

    ``psnr_peak`` and ``psnr_mse`` record the ingredients of the PSNR value
    so runs with different reconstruction peaks stay comparable.
    """

    reconstruction_error: float
    rmse: float | None = None
    psnr: float | None = None
    psnr_peak: float | None = None
    psnr_mse: float | None = None
    per_iteration_rmse: tuple[float, ...] | None = field(default=None)

    def to_dict(self) -> dict:
        out: dict = {"reconstruction_error": self.reconstruction_error}
        if self.rmse is not None:
            out["rmse"] = self.rmse
        if self.psnr is not None:
            out["psnr"] = self.psnr
            out["psnr_peak"] = self.psnr_peak
            out["psnr_mse"] = self.psnr_mse
        if self.per_iteration_rmse is not None:
            out["per_iteration_rmse"] = list(self.per_iteration_rmse)
        return out


def evaluate(
    endmembers: EndmemberMatrix,
    observed: PixelMatrix,
    estimate: AbundanceMatrix,
    truth: AbundanceMatrix | None = None,
    clean: PixelMatrix | None = None,
    per_iteration_rmse: tuple[float, ...] | None = None,
) -> MetricsReport:
    """Score an abundance estimate against whatever references are available.

    Args:
        endmembers: spectra used to rebuild the scene from the estimate.
        observed: the (possibly noisy) data that was unmixed.
        estimate: abundances under evaluation.
        truth: ground-truth abundances, enables rmse.
        clean: noiseless spectra, enables reconstruction psnr.
        per_iteration_rmse: optional trace to carry through to the report.
    """
    reconstruction = mix(endmembers, estimate)
    re = reconstruction_error(observed, reconstruction)
    r = rmse(truth, estimate) if truth is not None else None
    p = peak = pmse = None
    if clean is not None:
        peak, pmse = _psnr_parts(reconstruction, clean)
        p = psnr(reconstruction, clean)
    return MetricsReport(
        reconstruction_error=re,
        rmse=r,
        psnr=p,
        psnr_peak=peak,
        psnr_mse=pmse,
        per_iteration_rmse=per_iteration_rmse,
    )

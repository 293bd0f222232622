"""Restoration quality metrics: PSNR and single-scale SSIM."""

import math

import numpy as np
from scipy.signal import convolve2d

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ValueError("peak must be > 0")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_kernel(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (r / sigma) ** 2)
    k /= k.sum()
    return np.outer(k, k)


def ssim_slice(a, b, peak=1.0):
    """Mean SSIM of one 2D slice (11x11 Gaussian window, sigma 1.5)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(
            f"slice {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    mu_a = convolve2d(a, kernel, mode="valid")
    mu_b = convolve2d(b, kernel, mode="valid")
    var_a = convolve2d(a * a, kernel, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, kernel, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, kernel, mode="valid") - mu_a * mu_b

    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def ssim(a, b, peak=1.0):
    """Slice-averaged SSIM of two stacks (or a single 2D image)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return ssim_slice(a, b, peak)
    return float(np.mean([ssim_slice(a[k], b[k], peak) for k in range(a.shape[0])]))

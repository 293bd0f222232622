"""Synthetic stripe degradation and phantom generation.

Stripes are modeled as multiplicative exponential attenuation: the field is
``S = exp(-a(t) * g(u) * j_z)`` with ``t`` the in-slice coordinate
perpendicular to the stripe direction, ``a(t) >= 0`` a sum of randomly
placed Gaussian bumps (thin quasi-periodic and thick aperiodic), ``g(u)`` a
slow modulation in [0.8, 1] along the stripes, and ``j_z`` a per-slice
amplitude jitter. This keeps S in (0, 1] by construction, matching an
absorption-type degradation Y = S * X.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import angular_energy_profile, build_annuli, forward_spectrum, whiten_magnitudes
from .volume import Volume, stripe_axis_degrees

# FWHM = sigma * 2 sqrt(2 ln 2)
FWHM_TO_SIGMA = 2.3548200450309493


@dataclass
class StripeComponent:
    count: int
    amplitude: float
    width_px: float


@dataclass
class StripeModel:
    """Parameters of the multiplicative stripe field.

    ``width_px`` is the FWHM of a bump in the attenuation profile, i.e. the
    visible thickness of the stripe line. ``profile`` optionally fixes the
    attenuation s(t) in (0, 1] explicitly (sampled at integer t); when
    absent the profile is drawn from the two bump components.
    ``modulation_scale_px = inf`` makes the field perfectly constant along
    the stripe direction.
    """

    direction_deg: float = 90.0
    profile: object = None
    thin_quasi_periodic: StripeComponent = field(
        default_factory=lambda: StripeComponent(count=8, amplitude=2.5, width_px=1.0)
    )
    thick_aperiodic: StripeComponent = field(
        default_factory=lambda: StripeComponent(count=2, amplitude=0.15, width_px=10.0)
    )
    modulation_scale_px: float = math.inf
    placement_jitter_frac: float = 0.08
    width_jitter_frac: float = 0.3
    amp_jitter_frac: float = 0.2
    slice_jitter_frac: float = 0.1

    def to_dict(self):
        return {
            "direction_deg": self.direction_deg,
            "profile": None if self.profile is None else list(np.asarray(self.profile, float)),
            "thin_quasi_periodic": vars(self.thin_quasi_periodic),
            "thick_aperiodic": vars(self.thick_aperiodic),
            "modulation_scale_px": self.modulation_scale_px,
            "placement_jitter_frac": self.placement_jitter_frac,
            "width_jitter_frac": self.width_jitter_frac,
            "amp_jitter_frac": self.amp_jitter_frac,
            "slice_jitter_frac": self.slice_jitter_frac,
        }


def _rng(seed, stream=0):
    return np.random.Generator(np.random.Philox(key=[int(seed) % 2**64, int(stream)]))


def _bump_profile(t_values, model, rng):
    """Attenuation a(t) >= 0 sampled at the given t coordinates."""
    t_min, t_max = float(t_values.min()), float(t_values.max())
    extent = t_max - t_min
    a = np.zeros_like(t_values)
    thin, thick = model.thin_quasi_periodic, model.thick_aperiodic
    centers, widths, amps = [], [], []
    if thin.count > 0:
        period = extent / thin.count
        for i in range(thin.count):
            c = t_min + (i + 0.5) * period + rng.uniform(-1, 1) * model.placement_jitter_frac * period
            centers.append(np.round(c))
            widths.append(thin.width_px * (1.0 + model.width_jitter_frac * rng.uniform(-1, 1)))
            amps.append(thin.amplitude * (1.0 - model.amp_jitter_frac * rng.uniform(0, 1)))
    for _ in range(thick.count):
        centers.append(np.round(rng.uniform(t_min, t_max)))
        widths.append(thick.width_px * (1.0 + model.width_jitter_frac * rng.uniform(-1, 1)))
        amps.append(thick.amplitude * (1.0 - model.amp_jitter_frac * rng.uniform(0, 1)))
    for c, w, amp in zip(centers, widths, amps):
        sigma = max(w, 1e-6) / FWHM_TO_SIGMA
        a += amp * np.exp(-0.5 * ((t_values - c) / sigma) ** 2)
    return a


def generate_stripe_field(shape, model, seed):
    """Draw the multiplicative stripe field S for the given volume shape.

    Deterministic in ``seed``. Bump centers are snapped to integer t so a
    single bump of amplitude ``a`` attains exp(-a) exactly at its center.
    """
    n_d, n_h, n_v = shape
    rng = _rng(seed)
    phi = math.radians(stripe_axis_degrees(model.direction_deg))
    y = np.arange(n_h)[:, None]
    x = np.arange(n_v)[None, :]
    # t runs perpendicular to the stripes, u along them
    t = x * math.sin(phi) - y * math.cos(phi)
    u = x * math.cos(phi) + y * math.sin(phi)
    if model.profile is not None:
        prof = np.asarray(model.profile, dtype=np.float64)
        if prof.ndim != 1 or np.any(prof <= 0) or np.any(prof > 1):
            raise ValueError("stripe profile must be a 1D array with values in (0, 1]")
        idx = np.clip(np.round(t - t.min()).astype(np.int64), 0, prof.size - 1)
        a = -np.log(prof)[idx]
    else:
        a = _bump_profile(t, model, rng)
    if math.isinf(model.modulation_scale_px):
        g = np.ones_like(u)
    else:
        phase = rng.uniform(0, 2 * math.pi)
        g = 0.9 + 0.1 * np.cos(2 * math.pi * u / model.modulation_scale_px + phase)
    plane = a * g
    jitter = 1.0 + model.slice_jitter_frac * rng.uniform(-1, 1, size=n_d)
    s = np.exp(-plane[None, :, :] * jitter[:, None, None])
    return Volume(data=s, stripe_axis=model.direction_deg)


def degrade(clean, stripe_field):
    """Apply the multiplicative stripe field: Y = S * X, elementwise."""
    if clean.data.shape != stripe_field.data.shape:
        raise ValueError(
            f"shape mismatch: clean {clean.data.shape} vs field {stripe_field.data.shape}"
        )
    return Volume(
        data=clean.data * stripe_field.data,
        voxel_spacing=clean.voxel_spacing,
        stripe_axis=stripe_field.stripe_axis,
    )


def _tukey(n, frac=0.25):
    w = np.ones(n)
    edge = max(2, int(frac * n))
    ramp = 0.5 * (1 - np.cos(np.pi * np.arange(edge) / edge))
    w[:edge] = ramp
    w[n - edge :] = ramp[::-1]
    return w


def make_phantom(shape, seed, max_attempts=20):
    """Smooth, directionally isotropic blob phantom with values in [0, 1].

    Blobs are tapered to the dim background near the slice borders (no
    periodic-wraparound edges, which would put structured energy on the
    frequency axes) and a faint noise floor keeps high-frequency annuli
    genuinely Rayleigh. Resamples (deterministically) until the angular
    spectral-energy profile is flat within a factor of 2 across 1-degree
    bins.
    """
    n_d, n_h, n_v = shape
    annuli = build_annuli(n_h, n_v, 1.0)
    window = _tukey(n_h)[:, None] * _tukey(n_v)[None, :]
    for attempt in range(max_attempts):
        rng = _rng(seed, stream=attempt + 1)
        n_blobs = int(rng.integers(20, 61))
        blobs = np.zeros(shape, dtype=np.float64)
        z = np.arange(n_d)[:, None, None]
        y = np.arange(n_h)[None, :, None]
        x = np.arange(n_v)[None, None, :]
        for _ in range(n_blobs):
            cz = rng.uniform(0, n_d - 1) if n_d > 1 else 0.0
            cy, cx = rng.uniform(0, n_h - 1), rng.uniform(0, n_v - 1)
            # in-plane sigma is isotropic on purpose: directional blobs would
            # put structured energy into the wedge the detector watches
            sig = rng.uniform(2.0, max(3.0, min(n_h, n_v) / 6.0))
            sig_z = rng.uniform(1.0, max(1.5, n_d / 4.0))
            amp = rng.uniform(0.3, 1.0)
            r2 = ((y - cy) ** 2 + (x - cx) ** 2) / (2 * sig**2)
            if n_d > 1:
                r2 = r2 + (z - cz) ** 2 / (2 * sig_z**2)
            blobs += amp * np.exp(-r2)
        data = 0.05 + blobs * window[None, :, :]
        data += rng.normal(0.0, 0.003 * data.max(), size=shape)
        data -= data.min()
        peak = data.max()
        if peak > 0:
            data /= peak
        vol = Volume(data=data, stripe_axis="vertical")
        white = whiten_magnitudes(forward_spectrum(vol), annuli)
        profile = angular_energy_profile(white, annuli, guard_radius_px=3)
        lo, hi = np.nanmin(profile), np.nanmax(profile)
        if lo > 0 and hi / lo <= 2.0:
            return vol
    raise RuntimeError(f"phantom isotropy check failed after {max_attempts} attempts")

"""Self-supervised training loss: spatial MSE plus spectral annulus isotropy.

The isotropy term pulls the magnitude of every masked (recovered) Fourier
coefficient toward the mean magnitude of the unmasked coefficients of its
own (slice, annulus); this is what stops the identity mapping from being a
minimizer. Both terms use sum reduction; beta absorbs the scale.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .unroll import fft2_centered


@dataclass
class LossBreakdown:
    mse: float
    isotropy: float

    @property
    def total(self):
        return self.mse + self._beta * self.isotropy

    _beta: float = 1.0


class Self2SelfLoss:
    """Precomputed index structure for the loss of one (mask, annuli) pair.

    Annuli with an empty masked subset or an empty unmasked complement
    contribute nothing to the isotropy term.
    """

    def __init__(self, field, annuli, beta):
        self.beta = float(beta)
        mask = np.asarray(field.M, dtype=bool)
        n_d = mask.shape[0]
        ring = annuli.ring_id
        n_rings = annuli.n_rings

        gid_grid = ring[None, :, :] + n_rings * np.arange(n_d)[:, None, None]
        n_groups = n_rings * n_d
        p_counts = np.bincount(gid_grid[mask], minlength=n_groups)
        q_counts = np.bincount(gid_grid[~mask], minlength=n_groups)
        valid = (p_counts > 0) & (q_counts > 0)

        mk, mi, mj = np.nonzero(mask)
        m_gid = gid_grid[mk, mi, mj]
        m_keep = valid[m_gid]
        self.masked_bins = torch.from_numpy(
            np.stack([mk[m_keep], mi[m_keep], mj[m_keep]], axis=1)
        )
        self.masked_gid = torch.from_numpy(m_gid[m_keep])

        uk, ui, uj = np.nonzero(~mask)
        u_gid = gid_grid[uk, ui, uj]
        u_keep = valid[u_gid]
        self.unmasked_bins = torch.from_numpy(
            np.stack([uk[u_keep], ui[u_keep], uj[u_keep]], axis=1)
        )
        self.unmasked_gid = torch.from_numpy(u_gid[u_keep])
        self.q_counts = torch.from_numpy(q_counts.astype(np.float64))
        self.n_groups = n_groups

    def __call__(self, x, y):
        """Returns (total, mse, isotropy) as torch scalars."""
        mse = ((y - x) ** 2).sum()
        if self.masked_bins.shape[0] == 0:
            iso = torch.zeros((), dtype=torch.float64)
            return mse + self.beta * iso, mse, iso
        spec = fft2_centered(x)
        ub = self.unmasked_bins
        u_mags = spec[ub[:, 0], ub[:, 1], ub[:, 2]].abs()
        q_sums = torch.zeros(self.n_groups, dtype=torch.float64)
        q_sums = q_sums.index_add(0, self.unmasked_gid, u_mags)
        q_mean = q_sums / torch.clamp(self.q_counts, min=1.0)
        mb = self.masked_bins
        m_mags = spec[mb[:, 0], mb[:, 1], mb[:, 2]].abs()
        iso = ((m_mags - q_mean[self.masked_gid]) ** 2).sum()
        return mse + self.beta * iso, mse, iso


def self2self_loss(x, y, field, annuli, beta):
    """Numpy-facing evaluation returning a LossBreakdown."""
    crit = Self2SelfLoss(field, annuli, beta)
    with torch.no_grad():
        _, mse, iso = crit(
            torch.as_tensor(np.asarray(x, dtype=np.float64)),
            torch.as_tensor(np.asarray(y, dtype=np.float64)),
        )
    return LossBreakdown(mse=float(mse), isotropy=float(iso), _beta=beta)

"""Independent reference computations shared by the tests."""
import numpy as np

from sar_atr.rfsim import C, frequency_grid, phase_centers


def matched_filter(hist, points):
    """Direct sum over every frequency and pulse at arbitrary world points."""
    f = frequency_grid(hist.radar)
    pos = phase_centers(hist.geometry)
    R = np.linalg.norm(pos[None, :, :] - points[:, None, :], axis=2)  # (Q, N_p)
    phase = np.exp(4j * np.pi * f[None, :, None] * R[:, None, :] / C)
    return np.einsum("kp,qkp->q", hist.samples, phase) / hist.samples.size

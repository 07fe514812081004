"""Escape-time experiments for one-pass SGD on phase retrieval.

The compiled core lives in ``medlab._medlab``; everything is re-exported here.
"""

from ._medlab import *  # noqa: F401,F403
from ._medlab import __version__, Error, ConfigError  # noqa: F401


def overlaps_dataframe(trajectory):
    """Trajectory columns as a dict of numpy arrays (t, risk, m_j, a_j)."""
    out = {"t": trajectory.t, "risk": trajectory.risk}
    m = trajectory.m
    a = trajectory.a
    for j in range(m.shape[1]):
        out[f"m_{j + 1}"] = m[:, j]
    for j in range(a.shape[1]):
        out[f"a_{j + 1}"] = a[:, j]
    return out

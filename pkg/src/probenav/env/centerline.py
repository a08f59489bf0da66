"""Arc-length parameterized cubic centerline curve."""

from __future__ import annotations

import numpy as np

from .geometry import frame_from_tangent, quat_from_matrix

ARC_SAMPLES = 2048


class Centerline:
    """p(u) = c0 + c1*u + c2*u^2 + c3*u^3 for u in [0, 1], units mm.

    A dense chord-length table maps arc length d to the curve parameter, so
    ``point_at``/``tangent_at`` take millimetres along the curve.
    """

    def __init__(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=np.float64)
        if coeffs.shape != (4, 3):
            raise ValueError(f"centerline coeffs must be (4, 3), got {coeffs.shape}")
        self.coeffs = coeffs
        u = np.linspace(0.0, 1.0, ARC_SAMPLES + 1)
        pts = self._eval(u)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        self._s_table = np.concatenate([[0.0], np.cumsum(seg)])
        self._u_table = u
        self.length = float(self._s_table[-1])

    def _eval(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        powers = np.stack([np.ones_like(u), u, u * u, u ** 3], axis=1)
        return powers @ self.coeffs

    def _deriv(self, u):
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        powers = np.stack([np.zeros_like(u), np.ones_like(u), 2.0 * u, 3.0 * u * u], axis=1)
        return powers @ self.coeffs

    def u_of_arc(self, d: float) -> float:
        d = float(np.clip(d, 0.0, self.length))
        return float(np.interp(d, self._s_table, self._u_table))

    def point_at(self, d: float) -> np.ndarray:
        return self._eval(self.u_of_arc(d))[0]

    def tangent_at(self, d: float) -> np.ndarray:
        t = self._deriv(self.u_of_arc(d))[0]
        return t / np.linalg.norm(t)

    def frame_quat_at(self, d: float) -> np.ndarray:
        return quat_from_matrix(frame_from_tangent(self.tangent_at(d)))

    def transformed(self, linear: np.ndarray, offset: np.ndarray) -> "Centerline":
        """Apply x -> linear @ x + offset; cubics are closed under affines."""
        new = self.coeffs @ np.asarray(linear, dtype=np.float64).T
        new[0] += np.asarray(offset, dtype=np.float64)
        return Centerline(new)

    def displaced(self, delta_coeffs: np.ndarray) -> "Centerline":
        return Centerline(self.coeffs + np.asarray(delta_coeffs, dtype=np.float64))

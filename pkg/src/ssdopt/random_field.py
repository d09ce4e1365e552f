"""Truncated Karhunen-Loeve sampler for a Gaussian field on the unit square.

The covariance is (-Laplace + tau^2)^(-alpha) under homogeneous Neumann
conditions, whose eigenfunctions are tensorized cosines. Draws are the
truncated series sum_k sqrt(lambda_k) xi_k phi_k with xi_k iid standard
normal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import NodalFunction


@dataclass(frozen=True)
class KleSpec:
    """Covariance parameters and per-axis truncation cutoff.

    tau is the inverse lengthscale, alpha the regularity exponent (alpha > 1
    so draws are continuous in 2D), and modes k = (k1, k2) range over
    0 <= k1, k2 <= kmax.
    """

    tau: float = 1.0
    alpha: float = 3.0
    kmax: int = 10

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.alpha <= 1:
            raise ValueError("alpha must exceed 1")
        if self.kmax < 0:
            raise ValueError("kmax must be >= 0")

    @property
    def num_modes(self):
        return (self.kmax + 1) ** 2


@dataclass
class FieldDraw:
    """One set of iid N(0,1) expansion coefficients, with seed provenance."""

    coefficients: np.ndarray  # shape (kmax+1, kmax+1), entry [k1, k2]
    seed: int | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2 or self.coefficients.shape[0] != self.coefficients.shape[1]:
            raise ValueError("coefficients must form a square (kmax+1)^2 grid")


def eigenvalue(spec: KleSpec, k1: int, k2: int) -> float:
    """lambda_k = (|k|^2 pi^2 + tau^2)^(-alpha)."""
    return float(((k1 * k1 + k2 * k2) * np.pi**2 + spec.tau**2) ** (-spec.alpha))


def eigenpair(spec: KleSpec, k):
    """Eigenvalue and pointwise evaluator for mode k = (k1, k2).

    phi_k(x) = c_{k1} cos(k1 pi x1) * c_{k2} cos(k2 pi x2) with c_0 = 1 and
    c_m = sqrt(2) otherwise, the unique L2-orthonormal tensor normalization.
    """
    k1, k2 = int(k[0]), int(k[1])
    if not (0 <= k1 <= spec.kmax and 0 <= k2 <= spec.kmax):
        raise ValueError("mode index outside the truncation range")
    c1 = 1.0 if k1 == 0 else np.sqrt(2.0)
    c2 = 1.0 if k2 == 0 else np.sqrt(2.0)

    def phi(x1, x2):
        return c1 * np.cos(k1 * np.pi * np.asarray(x1)) * c2 * np.cos(k2 * np.pi * np.asarray(x2))

    return eigenvalue(spec, k1, k2), phi


def _axis_basis(spec: KleSpec, x: np.ndarray) -> np.ndarray:
    """Matrix [c_k cos(k pi x_i)] of shape (len(x), kmax+1)."""
    ks = np.arange(spec.kmax + 1)
    scale = np.where(ks == 0, 1.0, np.sqrt(2.0))
    return scale[None, :] * np.cos(np.outer(np.asarray(x, dtype=float), ks * np.pi))


def _eigenvalue_grid(spec: KleSpec) -> np.ndarray:
    ks = np.arange(spec.kmax + 1)
    k2 = ks[:, None] ** 2 + ks[None, :] ** 2
    return (k2 * np.pi**2 + spec.tau**2) ** (-spec.alpha)


def field_values(spec: KleSpec, draw: FieldDraw, points: np.ndarray) -> np.ndarray:
    """Evaluate the truncated expansion at arbitrary points, shape (m, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    amp = np.sqrt(_eigenvalue_grid(spec)) * draw.coefficients
    B1 = _axis_basis(spec, pts[:, 0])
    B2 = _axis_basis(spec, pts[:, 1])
    return np.einsum("nk,kl,nl->n", B1, amp, B2)


def truncated_variance(spec: KleSpec, points: np.ndarray) -> np.ndarray:
    """Pointwise variance of the truncated field: sum_k lambda_k phi_k(x)^2."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lam = _eigenvalue_grid(spec)
    B1 = _axis_basis(spec, pts[:, 0]) ** 2
    B2 = _axis_basis(spec, pts[:, 1]) ** 2
    return np.einsum("nk,kl,nl->n", B1, lam, B2)


def sample(spec: KleSpec, mesh, rng) -> tuple[FieldDraw, NodalFunction]:
    """Draw one field and interpolate it onto the mesh nodes.

    rng may be an integer seed (recorded in the draw) or a numpy Generator.
    """
    if isinstance(rng, (int, np.integer)):
        seed = int(rng)
        gen = np.random.default_rng(seed)
    else:
        seed = None
        gen = rng
    xi = gen.standard_normal((spec.kmax + 1, spec.kmax + 1))
    draw = FieldDraw(xi, seed=seed)
    values = field_values(spec, draw, mesh.nodes)
    return draw, NodalFunction(mesh, values)


def field_on_mesh(spec: KleSpec, draw: FieldDraw, mesh) -> NodalFunction:
    """Re-interpolate a recorded draw (replay path for manifests/tests)."""
    return NodalFunction(mesh, field_values(spec, draw, mesh.nodes))

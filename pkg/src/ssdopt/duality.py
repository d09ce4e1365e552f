"""Directions of steepest descent and dual norms in W^{1,p}_0 and L^p.

A functional F in the dual space is stored as its values against every
nodal basis function. The W^{1,p}_0 duality map is realized by solving an
(unscaled) p-Laplace problem and normalizing; the L^p map is a pointwise
power transform of the functional's density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import NodalFunction, SolverSettings

#: below this norm a direction solve is treated as stationary
DEGENERATE_NORM = 1e-14

W1P0 = "W1p0"
LP = "Lp"


@dataclass(frozen=True)
class SpaceDescriptor:
    """Which Banach space a functional lives over: W^{1,p}_0 or L^p."""

    kind: str
    p: float

    def __post_init__(self):
        if self.kind not in (W1P0, LP):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if self.p < 2:
            raise ValueError("the exponent p must be >= 2")

    @property
    def conjugate(self):
        return self.p / (self.p - 1.0)


@dataclass
class DualVector:
    """Assembled linear functional: values[i] = F[eta_i].

    For the L^p kind the functional is integration against a nodal density r
    (values = lumped_mass * r), kept alongside for the closed-form duality
    map. For W^{1,p}_0, entries at Dirichlet nodes are constrained and
    ignored by norms and directions.
    """

    space: SpaceDescriptor
    mesh: fem.StructuredMesh
    values: np.ndarray
    density: NodalFunction | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.num_nodes,):
            raise ValueError("functional values must have one entry per node")
        if self.space.kind == LP and self.density is None:
            raise ValueError("Lp dual vectors carry a nodal density")

    def __call__(self, v: NodalFunction) -> float:
        return float(np.dot(self.values, v.coeffs))

    def scaled(self, c: float) -> "DualVector":
        density = None if self.density is None else self.density * c
        return DualVector(self.space, self.mesh, self.values * c, density)


def w1p_norm(f: NodalFunction, p: float) -> float:
    """Gradient p-norm (integral of |grad f|^p)^(1/p), exact for P1."""
    return fem.integrate_power(f, p, "gradient") ** (1.0 / p)


def lp_norm(f: NodalFunction, p: float) -> float:
    """Nodal-power L^p norm (sum m_i |f_i|^p)^(1/p)."""
    return fem.nodal_power(f, p) ** (1.0 / p)


def lp_functional(r: NodalFunction, p: float) -> DualVector:
    """Wrap a nodal density as the functional eta -> integral(r eta) under
    nodal quadrature."""
    space = SpaceDescriptor(LP, p)
    values = fem.lumped_mass(r.mesh) * r.coeffs
    return DualVector(space, r.mesh, values, density=r)


def w1p_functional(mesh, values: np.ndarray, p: float) -> DualVector:
    """Wrap functional values as a W^{1,p}_0 dual vector (boundary entries
    are zeroed since those basis functions are constrained)."""
    vals = np.asarray(values, dtype=float).copy()
    vals[mesh.boundary_mask] = 0.0
    return DualVector(SpaceDescriptor(W1P0, p), mesh, vals)


def steepest_direction_w1p(F: DualVector, settings: SolverSettings | None = None):
    """Unit direction minimizing F[v] over the W^{1,p}_0 ball, and the dual
    norm of F.

    Solves integral(|grad w|^(p-2) grad w . grad eta) = -F[eta] for all
    interior eta by Newton (homogeneous Dirichlet), then rescales:
    v = w / ||w|| and ||F||_* = ||w||^(p-1). Stationary functionals give the
    zero direction.
    """
    if F.space.kind != W1P0:
        raise ValueError("functional is not of W1p0 kind")
    settings = settings or SolverSettings()
    p = F.space.p
    mesh = F.mesh
    free = mesh.interior_index
    target = -F.values

    if np.max(np.abs(target[free]), initial=0.0) == 0.0:
        return NodalFunction.zero(mesh), 0.0

    w = _solve_plaplace(mesh, target, p, free, settings)
    norm = w1p_norm(w, p)
    if norm <= DEGENERATE_NORM:
        return NodalFunction.zero(mesh), 0.0
    return w * (1.0 / norm), norm ** (p - 1.0)


def _solve_plaplace(mesh, target, p, free, settings):
    """Newton solve of the p-Laplace system with right-hand side `target`,
    warm-started from the rescaled p=2 solution."""
    stiffness = fem.assemble_plaplace_jacobian(NodalFunction.zero(mesh), 2.0, 0.0)
    K_free, b_free, _ = fem.apply_dirichlet(stiffness, target, mesh.boundary_mask)
    z = np.zeros(mesh.num_nodes)
    z[free] = fem.solve_linear(K_free, b_free, settings)
    w0 = NodalFunction(mesh, z)
    if p != 2.0:
        # Scale so the one-dimensional p-Laplace equation along z holds exactly.
        energy_2 = float(np.dot(z[free], b_free))
        energy_p = fem.integrate_power(w0, p, "gradient")
        if energy_p > 0:
            w0 = w0 * float((energy_2 / energy_p) ** (1.0 / (p - 1.0)))

    def residual(w):
        return fem.assemble_plaplace_residual(w, p, 0.0)[free] - target[free]

    def jacobian(w):
        J = fem.assemble_plaplace_jacobian(w, p, settings.grad_regularization)
        return J.matrix[free][:, free].tocsr()

    return fem.newton_solve(residual, jacobian, w0, settings, free=free)


def steepest_direction_lp(F: DualVector):
    """Closed-form L^p steepest descent: v = -sign(r)|r|^(1/(p-1)) normalized
    in the nodal L^p norm, with dual norm ||r|| in L^(p') (nodal quadrature).

    With these discrete norms the Hoelder extremality F[v] = -||F||_* holds
    to round-off.
    """
    if F.space.kind != LP:
        raise ValueError("functional is not of Lp kind")
    p = F.space.p
    r = F.density.coeffs
    weights = fem.lumped_mass(F.mesh)
    power = np.abs(r) ** (1.0 / (p - 1.0))
    scale = float(np.dot(weights, power**p)) ** (1.0 / p)
    if scale <= DEGENERATE_NORM:
        return NodalFunction.zero(F.mesh), 0.0
    v = NodalFunction(F.mesh, -np.sign(r) * power / scale)
    dual_norm = float(np.dot(weights, np.abs(r) ** F.space.conjugate)) ** (1.0 / F.space.conjugate)
    return v, dual_norm


def steepest_direction(F: DualVector, settings: SolverSettings | None = None):
    """Dispatch on the space kind."""
    if F.space.kind == W1P0:
        return steepest_direction_w1p(F, settings)
    return steepest_direction_lp(F)


def riesz_representative(F: DualVector, settings: SolverSettings | None = None):
    """Negative gradient in the Hilbert case p = 2: the unnormalized element
    v with (v, eta)_H = -F[eta], plus its H-norm.

    This is the stochastic gradient step direction; only valid at p = 2.
    """
    if F.space.p != 2.0:
        raise ValueError("Riesz representation requires p = 2")
    settings = settings or SolverSettings()
    if F.space.kind == LP:
        v = -F.density
        return v, lp_norm(v, 2.0)
    mesh = F.mesh
    stiffness = fem.assemble_plaplace_jacobian(NodalFunction.zero(mesh), 2.0, 0.0)
    K_free, b_free, free = fem.apply_dirichlet(stiffness, -F.values, mesh.boundary_mask)
    z = np.zeros(mesh.num_nodes)
    if np.linalg.norm(b_free) > 0:
        z[free] = fem.solve_linear(K_free, b_free, settings)
    v = NodalFunction(mesh, z)
    return v, w1p_norm(v, 2.0)

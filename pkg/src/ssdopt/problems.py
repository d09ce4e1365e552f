"""The two stochastic objectives driven by the descent loop.

Application 1: random p-Laplace energy j(xi, u) = (1/p) integral
|grad(u + g)|^p over W^{1,p}_0, with g a shifted random field.

Application 2: semilinear elliptic control. The state y solves
-div(D grad y) + y + y^5 = F + u with natural boundary conditions, and
j(xi, u) = 1/2 integral (y - y_d)^2 + (beta/p) integral |u|^p over L^p.

All zeroth-order App2 integrals use nodal (mass-lumped) quadrature, so the
pointwise density beta |u|^(p-2) u - q is the exact derivative of the
discrete functional.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import duality, fem, random_field
from .duality import DualVector, SpaceDescriptor
from .fem import NodalFunction, SolverSettings, StructuredMesh
from .random_field import FieldDraw, KleSpec


def cosine_bump(x1, x2):
    """Deterministic offset of the App1 data: cos(pi x1)^2 cos(pi x2)^2."""
    return np.cos(np.pi * x1) ** 2 * np.cos(np.pi * x2) ** 2


def default_target(x1, x2):
    """App2 target state: 1 + 256 ((x1-1) x1 (x2-1) x2)^2."""
    return 1.0 + 256.0 * ((x1 - 1.0) * x1 * (x2 - 1.0) * x2) ** 2


@dataclass
class App1Config:
    mesh: StructuredMesh
    p: float = 4.0
    kle: KleSpec = field(default_factory=lambda: KleSpec(tau=1.0, alpha=3.0, kmax=10))
    offset: Callable = cosine_bump
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")


@dataclass
class App1Sample:
    """One scenario: the random datum g and the draw that produced it."""

    g: NodalFunction
    draw: FieldDraw


class App1Problem:
    """Random p-Laplace energy on W^{1,p}_0."""

    def __init__(self, config: App1Config):
        self.config = config
        self.mesh = config.mesh
        self.space = SpaceDescriptor(duality.W1P0, config.p)
        self._offset = fem.nodal_interpolate(config.mesh, config.offset)

    def sample(self, rng) -> App1Sample:
        draw, theta = random_field.sample(self.config.kle, self.mesh, rng)
        return App1Sample(g=theta + self._offset, draw=draw)

    def value(self, u: NodalFunction, s: App1Sample) -> float:
        self._check_constrained(u)
        p = self.config.p
        return fem.integrate_power(u + s.g, p, "gradient") / p

    def derivative(self, u: NodalFunction, s: App1Sample) -> DualVector:
        self._check_constrained(u)
        values = fem.assemble_plaplace_residual(u + s.g, self.config.p, 0.0)
        return duality.w1p_functional(self.mesh, values, self.config.p)

    def direction(self, F: DualVector):
        return duality.steepest_direction_w1p(F, self.config.settings)

    def norm(self, u: NodalFunction) -> float:
        return duality.w1p_norm(u, self.config.p)

    def _check_constrained(self, u):
        if np.max(np.abs(u.coeffs[self.mesh.boundary_mask]), initial=0.0) > 1e-12:
            raise ValueError("App1 controls must vanish on the boundary")


@dataclass
class App2Config:
    mesh: StructuredMesh
    p: float = 4.0
    beta: float = 1e-2
    kle: KleSpec = field(default_factory=lambda: KleSpec(tau=1.0, alpha=2.0, kmax=10))
    target: Callable = default_target
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.beta <= 0:
            raise ValueError("beta must be positive")


class App2Sample:
    """One scenario: diffusion D = 1 + exp(theta_D) and forcing F = 1 + 5 theta_F,
    drawn independently, plus cached state/adjoint solves."""

    def __init__(self, diffusion, forcing, diffusion_draw, forcing_draw):
        self.diffusion = diffusion
        self.forcing = forcing
        self.diffusion_draw = diffusion_draw
        self.forcing_draw = forcing_draw
        self._stiffness = None
        self._state = None  # (u coefficients, y)
        self._adjoint = None  # (u coefficients, q)

    def stiffness(self):
        if self._stiffness is None:
            self._stiffness = fem.assemble_weighted_stiffness(self.diffusion)
        return self._stiffness


class App2Problem:
    """Semilinear elliptic optimal control with L^p cost."""

    def __init__(self, config: App2Config):
        self.config = config
        self.mesh = config.mesh
        self.space = SpaceDescriptor(duality.LP, config.p)
        self.y_d = fem.nodal_interpolate(config.mesh, config.target)
        self._weights = fem.lumped_mass(config.mesh)

    def sample(self, rng) -> App2Sample:
        if isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(int(rng))
        draw_d, theta_d = random_field.sample(self.config.kle, self.mesh, rng)
        draw_f, theta_f = random_field.sample(self.config.kle, self.mesh, rng)
        diffusion = NodalFunction(self.mesh, 1.0 + np.exp(theta_d.coeffs))
        forcing = NodalFunction(self.mesh, 1.0 + 5.0 * theta_f.coeffs)
        return App2Sample(diffusion, forcing, draw_d, draw_f)

    def state(self, u: NodalFunction, s: App2Sample) -> NodalFunction:
        """Newton solve of the discrete state equation, cached per control."""
        if s._state is not None and np.array_equal(s._state[0], u.coeffs):
            return s._state[1]
        A = s.stiffness().matrix
        m = self._weights
        load = m * (s.forcing.coeffs + u.coeffs)

        def residual(y):
            c = y.coeffs
            return A @ c + m * (c + c**5) - load

        def jacobian(y):
            c = y.coeffs
            return sp.csr_matrix(A + sp.diags(m * (1.0 + 5.0 * c**4)))

        y = fem.newton_solve(residual, jacobian, NodalFunction.zero(self.mesh), self.config.settings)
        s._state = (u.coeffs.copy(), y)
        s._adjoint = None
        return y

    def adjoint(self, u: NodalFunction, s: App2Sample) -> NodalFunction:
        """Linear adjoint solve at the cached state, cached per control."""
        if s._adjoint is not None and np.array_equal(s._adjoint[0], u.coeffs):
            return s._adjoint[1]
        y = self.state(u, s)
        m = self._weights
        J = sp.csr_matrix(s.stiffness().matrix + sp.diags(m * (1.0 + 5.0 * y.coeffs**4)))
        rhs = -m * (y.coeffs - self.y_d.coeffs)
        q = NodalFunction(self.mesh, fem.solve_linear(J, rhs, self.config.settings))
        s._adjoint = (u.coeffs.copy(), q)
        return q

    def value(self, u: NodalFunction, s: App2Sample) -> float:
        y = self.state(u, s)
        m = self._weights
        misfit = 0.5 * float(np.dot(m, (y.coeffs - self.y_d.coeffs) ** 2))
        return misfit + self.control_cost(u)

    def control_cost(self, u: NodalFunction) -> float:
        p = self.config.p
        return self.config.beta / p * float(np.dot(self._weights, np.abs(u.coeffs) ** p))

    def derivative(self, u: NodalFunction, s: App2Sample) -> DualVector:
        q = self.adjoint(u, s)
        p = self.config.p
        r = self.config.beta * np.abs(u.coeffs) ** (p - 2.0) * u.coeffs - q.coeffs
        return duality.lp_functional(NodalFunction(self.mesh, r), p)

    def direction(self, F: DualVector):
        return duality.steepest_direction_lp(F)

    def norm(self, u: NodalFunction) -> float:
        return duality.lp_norm(u, self.config.p)

    def mc_energy(self, u: NodalFunction, num_samples: int, rng, samples=None) -> float:
        """Control cost plus the Monte-Carlo average of the state misfits over
        fresh independent draws (or over explicitly supplied samples)."""
        if samples is None:
            if num_samples < 1:
                raise ValueError("num_samples must be >= 1")
            if isinstance(rng, (int, np.integer)):
                rng = np.random.default_rng(int(rng))
            samples = [self.sample(rng) for _ in range(num_samples)]
        m = self._weights
        misfits = []
        for s in samples:
            y = self.state(u, s)
            misfits.append(0.5 * float(np.dot(m, (y.coeffs - self.y_d.coeffs) ** 2)))
        return self.control_cost(u) + float(np.mean(misfits))

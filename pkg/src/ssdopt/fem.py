"""P1 finite elements on a structured triangulation of the unit square.

Provides the mesh, nodal functions, quadrature, assembly of mass and
p-Laplace operators, and the linear/Newton solvers used by the rest of
the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg


class AssemblyError(RuntimeError):
    """Raised when an assembled operator contains non-finite entries."""


class LinearSolveError(RuntimeError):
    """Raised when the iterative linear solver fails to converge."""

    def __init__(self, message, relative_residual):
        super().__init__(f"{message} (relative residual {relative_residual:.3e})")
        self.relative_residual = relative_residual


class NewtonError(RuntimeError):
    """Raised when Newton iteration exhausts its budget.

    Carries the last iterate and the residual-norm history for diagnosis.
    """

    def __init__(self, message, iterate, residual_history):
        super().__init__(message)
        self.iterate = iterate
        self.residual_history = residual_history


# Degree-5 quadrature on the reference triangle (7 points, barycentric).
# Exact for total degree <= 5; weights are relative to the triangle area.
_SQRT15 = np.sqrt(15.0)
_A1 = (6.0 + _SQRT15) / 21.0
_A2 = (6.0 - _SQRT15) / 21.0
QUAD_BARY = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        [1.0 - 2.0 * _A1, _A1, _A1],
        [_A1, 1.0 - 2.0 * _A1, _A1],
        [_A1, _A1, 1.0 - 2.0 * _A1],
        [1.0 - 2.0 * _A2, _A2, _A2],
        [_A2, 1.0 - 2.0 * _A2, _A2],
        [_A2, _A2, 1.0 - 2.0 * _A2],
    ]
)
QUAD_WEIGHTS = np.array(
    [
        9.0 / 40.0,
        (155.0 + _SQRT15) / 1200.0,
        (155.0 + _SQRT15) / 1200.0,
        (155.0 + _SQRT15) / 1200.0,
        (155.0 - _SQRT15) / 1200.0,
        (155.0 - _SQRT15) / 1200.0,
        (155.0 - _SQRT15) / 1200.0,
    ]
)


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and iteration caps shared by the linear and Newton solvers."""

    linear_tol: float = 1e-10
    newton_tol: float = 1e-9
    max_newton_iters: int = 50
    damping_floor: float = 2.0**-30
    grad_regularization: float = 1e-8
    max_linear_iters: int = 20000

    def __post_init__(self):
        if self.linear_tol <= 0 or self.newton_tol <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.max_newton_iters < 1 or self.max_linear_iters < 1:
            raise ValueError("iteration caps must be >= 1")
        if not 0 < self.damping_floor <= 1:
            raise ValueError("damping floor must lie in (0, 1]")
        if self.grad_regularization < 0:
            raise ValueError("gradient regularization must be >= 0")


class StructuredMesh:
    """Uniform triangulation of (0,1)^2 with nx*ny cells split along the
    lower-left to upper-right diagonal.

    Attributes
    ----------
    nodes : (n_nodes, 2) array of vertex coordinates
    triangles : (n_tri, 3) int array of node indices, counterclockwise
    boundary_mask : (n_nodes,) bool array, True on the boundary
    tri_area : (n_tri,) signed areas (all positive)
    tri_grad : (n_tri, 2, 3) basis-gradient maps; grad f on triangle t is
        tri_grad[t] @ f[triangles[t]]
    """

    def __init__(self, nx, ny, nodes, triangles):
        self.nx = nx
        self.ny = ny
        self.nodes = nodes
        self.triangles = triangles
        x, y = nodes[:, 0], nodes[:, 1]
        tol = 1e-12
        self.boundary_mask = (
            (np.abs(x) < tol) | (np.abs(x - 1) < tol) | (np.abs(y) < tol) | (np.abs(y - 1) < tol)
        )
        p0 = nodes[triangles[:, 0]]
        p1 = nodes[triangles[:, 1]]
        p2 = nodes[triangles[:, 2]]
        e1 = p1 - p0
        e2 = p2 - p0
        self.tri_area = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        # Barycentric gradients: grad lambda_i is a constant 2-vector per triangle.
        inv2a = 1.0 / (2.0 * self.tri_area)
        gx = np.stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]], axis=1)
        gy = np.stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]], axis=1)
        self.tri_grad = np.stack([gx, gy], axis=1) * inv2a[:, None, None]

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def interior_index(self):
        return np.flatnonzero(~self.boundary_mask)

    def quadrature_points(self):
        """Physical quadrature points, shape (n_tri, n_q, 2)."""
        verts = self.nodes[self.triangles]  # (n_tri, 3, 2)
        return np.einsum("qi,tid->tqd", QUAD_BARY, verts)


def build_mesh(nx: int, ny: int) -> StructuredMesh:
    """Triangulate the unit square into 2*nx*ny congruent triangles."""
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(0.0, 1.0, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def idx(i, j):
        return j * (nx + 1) + i

    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            a, b = idx(i, j), idx(i + 1, j)
            c, d = idx(i + 1, j + 1), idx(i, j + 1)
            tris[t] = (a, b, c)
            tris[t + 1] = (a, c, d)
            t += 2
    return StructuredMesh(nx, ny, nodes, tris)


@dataclass
class NodalFunction:
    """P1 finite-element function: one coefficient per mesh node."""

    mesh: StructuredMesh
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.mesh.num_nodes,):
            raise ValueError("coefficient count must equal the node count")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("nodal coefficients must be finite")

    @classmethod
    def zero(cls, mesh):
        return cls(mesh, np.zeros(mesh.num_nodes))

    def copy(self):
        return NodalFunction(self.mesh, self.coeffs.copy())

    def __add__(self, other):
        return NodalFunction(self.mesh, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return NodalFunction(self.mesh, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return NodalFunction(self.mesh, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return NodalFunction(self.mesh, -self.coeffs)


@dataclass
class SparseOperator:
    """CSR matrix over nodal indices with a symmetry tag."""

    matrix: sp.csr_matrix
    symmetric: bool = False

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m:
            raise ValueError("nodal operators must be square")


def nodal_interpolate(mesh, fn) -> NodalFunction:
    """Lagrange interpolation: evaluate fn(x, y) at every node."""
    vals = np.asarray(fn(mesh.nodes[:, 0], mesh.nodes[:, 1]), dtype=float)
    return NodalFunction(mesh, np.broadcast_to(vals, (mesh.num_nodes,)).copy())


def all_gradients(f: NodalFunction) -> np.ndarray:
    """Per-triangle constant gradients of a P1 function, shape (n_tri, 2)."""
    return np.einsum("tdi,ti->td", f.mesh.tri_grad, f.coeffs[f.mesh.triangles])


def element_gradient(f: NodalFunction, tri_index: int) -> np.ndarray:
    """Constant gradient of the affine interpolant on one triangle."""
    m = f.mesh
    return m.tri_grad[tri_index] @ f.coeffs[m.triangles[tri_index]]


def integrate_power(f: NodalFunction, p: float, mode: str) -> float:
    """Integral of |f|^p ('value') or |grad f|^p ('gradient') over the square.

    Gradient mode is exact (P1 gradients are piecewise constant); value mode
    uses the degree-5 rule, exact for polynomial integrands up to degree 5.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    mesh = f.mesh
    if mode == "gradient":
        g = all_gradients(f)
        mag2 = np.einsum("td,td->t", g, g)
        return float(np.dot(mesh.tri_area, mag2 ** (p / 2.0)))
    if mode == "value":
        vals = f.coeffs[mesh.triangles] @ QUAD_BARY.T  # (n_tri, n_q)
        per_tri = np.abs(vals) ** p @ QUAD_WEIGHTS
        return float(np.dot(mesh.tri_area, per_tri))
    raise ValueError(f"unknown mode {mode!r}")


def nodal_power(f: NodalFunction, p: float) -> float:
    """Mass-lumped integral of |f|^p: sum_i m_i |f_i|^p with m_i = integral of
    the i-th hat function."""
    m = lumped_mass(f.mesh)
    return float(np.dot(m, np.abs(f.coeffs) ** p))


def lumped_mass(mesh) -> np.ndarray:
    """Nodal quadrature weights m_i = integral of basis function i."""
    w = np.repeat(mesh.tri_area / 3.0, 3)
    return np.bincount(mesh.triangles.ravel(), weights=w, minlength=mesh.num_nodes)


_MASS_LOCAL = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0


def assemble_mass(mesh) -> SparseOperator:
    """Consistent P1 mass matrix M_ij = integral of eta_i eta_j (exact)."""
    blocks = mesh.tri_area[:, None, None] * _MASS_LOCAL[None, :, :]
    return _from_blocks(mesh, blocks, symmetric=True)


def _from_blocks(mesh, blocks, symmetric):
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    mat = sp.coo_matrix(
        (blocks.ravel(), (rows, cols)), shape=(mesh.num_nodes, mesh.num_nodes)
    ).tocsr()
    if not np.all(np.isfinite(mat.data)):
        raise AssemblyError("assembled operator has non-finite entries")
    return SparseOperator(mat, symmetric=symmetric)


def assemble_weighted_stiffness(coeff: NodalFunction) -> SparseOperator:
    """Stiffness matrix with a P1 coefficient: integral of c grad eta_i . grad eta_j.

    Exact: gradients are constant per triangle, so the coefficient integrates
    to its vertex mean times the area.
    """
    mesh = coeff.mesh
    cbar = coeff.coeffs[mesh.triangles].mean(axis=1)
    gtg = np.einsum("tdi,tdj->tij", mesh.tri_grad, mesh.tri_grad)
    blocks = (mesh.tri_area * cbar)[:, None, None] * gtg
    return _from_blocks(mesh, blocks, symmetric=True)


def assemble_plaplace_residual(w: NodalFunction, p: float, eps: float = 0.0) -> np.ndarray:
    """Functional values of the p-Laplace operator at w against every basis
    function: entry i is integral of (|grad w|^2 + eps^2)^((p-2)/2) grad w . grad eta_i.

    Exact per-triangle quadrature (all factors are constant on each triangle).
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    mesh = w.mesh
    g = all_gradients(w)
    mag2 = np.einsum("td,td->t", g, g) + eps * eps
    s = mag2 ** ((p - 2.0) / 2.0) if p != 2 else np.ones_like(mag2)
    flux = (mesh.tri_area * s)[:, None] * g  # (n_tri, 2)
    contrib = np.einsum("td,tdi->ti", flux, mesh.tri_grad)  # (n_tri, 3)
    out = np.bincount(mesh.triangles.ravel(), weights=contrib.ravel(), minlength=mesh.num_nodes)
    if not np.all(np.isfinite(out)):
        raise AssemblyError("p-Laplace residual has non-finite entries")
    return out


def assemble_plaplace_jacobian(w: NodalFunction, p: float, eps: float) -> SparseOperator:
    """Linearization of the p-Laplace residual at w (symmetric PSD).

    For p > 2 a positive eps keeps the operator nondegenerate where grad w
    vanishes.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    if p > 2 and eps <= 0:
        raise ValueError("eps must be positive for p > 2")
    mesh = w.mesh
    G = mesh.tri_grad  # (n_tri, 2, 3)
    gtg = np.einsum("tdi,tdj->tij", G, G)
    if p == 2:
        blocks = mesh.tri_area[:, None, None] * gtg
    else:
        g = all_gradients(w)
        mag2 = np.einsum("td,td->t", g, g) + eps * eps
        s = mag2 ** ((p - 2.0) / 2.0)
        gw = np.einsum("td,tdi->ti", g, G)  # (n_tri, 3): grad w . grad eta_i
        outer = np.einsum("ti,tj->tij", gw, gw)
        blocks = mesh.tri_area[:, None, None] * (
            s[:, None, None] * gtg + ((p - 2.0) * mag2 ** ((p - 4.0) / 2.0))[:, None, None] * outer
        )
    return _from_blocks(mesh, blocks, symmetric=True)


def apply_dirichlet(A, b, boundary_mask):
    """Eliminate homogeneous-Dirichlet rows/columns.

    Returns (A_free, b_free, free_index); boundary values are pinned to 0 so
    the eliminated columns contribute nothing to the right-hand side.
    """
    mat = A.matrix if isinstance(A, SparseOperator) else A
    free = np.flatnonzero(~boundary_mask)
    A_free = mat[free][:, free].tocsr()
    return A_free, np.asarray(b)[free], free


def solve_linear(A, b, settings: SolverSettings) -> np.ndarray:
    """Conjugate-gradient solve of an SPD system to relative residual
    settings.linear_tol, with Jacobi preconditioning."""
    mat = A.matrix if isinstance(A, SparseOperator) else A
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    diag = mat.diagonal()
    M = sp.diags(1.0 / np.where(diag > 0, diag, 1.0))
    x, info = cg(mat, b, rtol=settings.linear_tol, atol=0.0, maxiter=settings.max_linear_iters, M=M)
    rel = np.linalg.norm(b - mat @ x) / bnorm
    if info != 0 or not np.isfinite(rel):
        raise LinearSolveError("conjugate gradient did not converge", rel)
    # The recurrence residual scipy monitors can sit slightly below the true
    # one near the rounding floor; only a gross mismatch means breakdown.
    if rel > max(100.0 * settings.linear_tol, 1e-11):
        raise LinearSolveError("conjugate gradient stagnated", rel)
    return x


def newton_solve(residual_fn, jacobian_fn, u0: NodalFunction, settings: SolverSettings, free=None) -> NodalFunction:
    """Damped Newton iteration.

    residual_fn(u) returns the residual vector and jacobian_fn(u) its
    derivative; when `free` is given they are reduced to those indices and
    the update only touches them. Steps are halved while the residual norm
    fails to decrease, down to settings.damping_floor.
    """
    u = u0.copy()
    res = residual_fn(u)
    rnorm = np.linalg.norm(res)
    history = [rnorm]
    if rnorm <= settings.newton_tol:
        return u
    for _ in range(settings.max_newton_iters):
        J = jacobian_fn(u)
        delta = solve_linear(J, -res, settings)
        step = 1.0
        while True:
            trial = u.copy()
            if free is None:
                trial.coeffs += step * delta
            else:
                trial.coeffs[free] += step * delta
            trial_res = residual_fn(trial)
            trial_norm = np.linalg.norm(trial_res)
            if trial_norm < rnorm or step <= settings.damping_floor:
                break
            step *= 0.5
        u, res, rnorm = trial, trial_res, trial_norm
        history.append(rnorm)
        if rnorm <= settings.newton_tol:
            return u
    raise NewtonError(
        f"Newton did not reach tolerance {settings.newton_tol:.1e} in "
        f"{settings.max_newton_iters} iterations (last residual {rnorm:.3e})",
        u,
        history,
    )

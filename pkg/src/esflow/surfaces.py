"""Closed-form reference surfaces and their exact geometric fields.

Each surface supplies the data the flow solver needs at start-up (positions,
outward normal, mean curvature) and, for the stationary reference shapes
(sphere, torus), the full set of exact fields used by the error and defect
diagnostics: shape operator, Gaussian curvature, the cubic velocity term,
the Laplace-Beltrami of the mean curvature, and the tangential curvature
gradient.

Sign conventions: the normal is the outward unit normal, the mean curvature
is the *sum* of the principal curvatures (no 1/2 factor), so the unit sphere
has H = 2.  The extended shape operator A is the symmetric 3x3 matrix with
eigenvalues (kappa_1, kappa_2, 0) and A @ nu = 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp


class SurfaceError(Exception):
    pass


class PointOffSurfaceError(SurfaceError):
    """A point handed to the field oracle does not lie on the surface."""


class ProjectionError(SurfaceError):
    """Newton projection onto the surface failed to converge."""


ON_SURFACE_TOL = 1e-8
PROJECT_TOL = 1e-12
PROJECT_MAXIT = 50


@dataclass
class ExactFields:
    """Geometric quantities at one or more surface points.

    All arrays broadcast over the leading point axes.  ``lap_H``, ``V`` and
    ``z`` (Laplace-Beltrami of H, Willmore normal velocity, tangential
    gradient of H) are only available in closed form on the sphere and the
    torus; other surfaces carry ``None`` there.
    """

    nu: np.ndarray      # (..., 3) unit outward normal
    H: np.ndarray       # (...,)   mean curvature, kappa_1 + kappa_2
    K: np.ndarray       # (...,)   Gaussian curvature
    A: np.ndarray       # (..., 3, 3) extended shape operator
    absA2: np.ndarray   # (...,)   |A|^2 = kappa_1^2 + kappa_2^2
    Q: np.ndarray       # (...,)   cubic term  -H^3/2 + |A|^2 H
    lap_H: np.ndarray | None = None
    V: np.ndarray | None = None   # Willmore velocity  lap_H + Q
    z: np.ndarray | None = None   # (..., 3) tangential gradient of H

    @property
    def has_velocity(self):
        return self.V is not None


class AnalyticSurface:
    """Base class; concrete kinds provide an implicit function or closed forms."""

    name = "surface"
    #: exact (V, z) available in closed form
    has_exact_velocity = False

    def implicit(self, p):
        raise NotImplementedError

    def project(self, p):
        raise NotImplementedError

    def exact_fields(self, p):
        raise NotImplementedError

    def check_on_surface(self, p, tol=ON_SURFACE_TOL):
        res = np.abs(self.implicit(np.asarray(p, dtype=float)))
        worst = float(np.max(res))
        if worst > tol:
            raise PointOffSurfaceError(
                f"{self.name}: point off surface, implicit residual {worst:.3e} > {tol:.1e}")


def _orthogonal_projector(nu):
    """I - nu nu^T for stacked unit vectors nu of shape (..., 3)."""
    eye = np.eye(3)
    return eye - nu[..., :, None] * nu[..., None, :]


class _ImplicitSurface(AnalyticSurface):
    """Fields derived from a level-set description F(x) = 0 with F < 0 inside.

    The gradient and Hessian of F are generated symbolically once per
    instance and evaluated vectorized.  With g = grad F, P = I - nu nu^T:

        nu = g / |g|,   A = P Hess(F) P / |g|,   H = tr(A).
    """

    def _implicit_expr(self, x, y, z):
        raise NotImplementedError

    @cached_property
    def _compiled(self):
        x, y, z = sp.symbols("x y z", real=True)
        expr = self._implicit_expr(x, y, z)
        grad = [sp.diff(expr, s) for s in (x, y, z)]
        hess = [[sp.diff(gi, s) for s in (x, y, z)] for gi in grad]
        fval = sp.lambdify((x, y, z), expr, modules="numpy")
        fgrad = sp.lambdify((x, y, z), grad, modules="numpy")
        fhess = sp.lambdify((x, y, z), hess, modules="numpy")
        return fval, fgrad, fhess

    def implicit(self, p):
        p = np.asarray(p, dtype=float)
        fval = self._compiled[0]
        return np.asarray(fval(p[..., 0], p[..., 1], p[..., 2]), dtype=float)

    def _grad(self, p):
        comps = self._compiled[1](p[..., 0], p[..., 1], p[..., 2])
        return np.stack([np.broadcast_to(c, p.shape[:-1]) for c in comps], axis=-1).astype(float)

    def _hess(self, p):
        rows = self._compiled[2](p[..., 0], p[..., 1], p[..., 2])
        shape = p.shape[:-1]
        out = np.empty(shape + (3, 3))
        for i in range(3):
            for j in range(3):
                out[..., i, j] = np.broadcast_to(rows[i][j], shape)
        return out

    def project(self, p):
        p = np.array(p, dtype=float)
        scalar = p.ndim == 1
        q = np.atleast_2d(p).astype(float)
        for _ in range(PROJECT_MAXIT):
            f = self.implicit(q)
            if np.all(np.abs(f) <= PROJECT_TOL):
                break
            g = self._grad(q)
            g2 = np.einsum("...d,...d->...", g, g)
            if np.any(g2 < 1e-30):
                raise ProjectionError(f"{self.name}: vanishing implicit gradient")
            q = q - (f / g2)[..., None] * g
        else:
            raise ProjectionError(
                f"{self.name}: projection did not converge in {PROJECT_MAXIT} iterations")
        return q[0] if scalar else q.reshape(p.shape)

    def exact_fields(self, p):
        p = np.asarray(p, dtype=float)
        self.check_on_surface(p)
        g = self._grad(p)
        hess = self._hess(p)
        gnorm = np.linalg.norm(g, axis=-1)
        nu = g / gnorm[..., None]
        proj = _orthogonal_projector(nu)
        a_mat = np.einsum("...ij,...jk,...kl->...il", proj, hess, proj) / gnorm[..., None, None]
        mean = np.einsum("...ii->...", a_mat)
        abs_a2 = np.einsum("...ij,...ij->...", a_mat, a_mat)
        gauss = 0.5 * (mean ** 2 - abs_a2)
        cubic = -0.5 * mean ** 3 + abs_a2 * mean
        return ExactFields(nu=nu, H=mean, K=gauss, A=a_mat, absA2=abs_a2, Q=cubic)


class Sphere(AnalyticSurface):
    """Round sphere of radius R; Willmore-stationary with V = 0, z = 0."""

    name = "sphere"
    has_exact_velocity = True

    def __init__(self, radius=1.0):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)

    def implicit(self, p):
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(p, axis=-1) - self.radius

    def project(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1)
        if np.any(r < 1e-300):
            raise ProjectionError("sphere: cannot project the origin")
        return p * (self.radius / r)[..., None]

    def from_unit_sphere(self, q):
        return self.radius * np.asarray(q, dtype=float)

    def exact_fields(self, p):
        p = np.asarray(p, dtype=float)
        self.check_on_surface(p)
        shape = p.shape[:-1]
        radius = self.radius
        nu = p / np.linalg.norm(p, axis=-1)[..., None]
        mean = np.full(shape, 2.0 / radius)
        gauss = np.full(shape, 1.0 / radius ** 2)
        a_mat = _orthogonal_projector(nu) / radius
        abs_a2 = np.full(shape, 2.0 / radius ** 2)
        cubic = -0.5 * mean ** 3 + abs_a2 * mean
        zeros = np.zeros(shape)
        return ExactFields(nu=nu, H=mean, K=gauss, A=a_mat, absA2=abs_a2, Q=cubic,
                           lap_H=zeros, V=cubic + zeros, z=np.zeros(shape + (3,)))


class Torus(AnalyticSurface):
    """Torus of revolution around the z-axis with radii R > r > 0.

    The mean curvature depends on the minor angle only, which makes its
    surface Laplacian and tangential gradient available in closed form.
    The ratio R/r = sqrt(2) gives the Willmore-stationary Clifford torus.
    """

    name = "torus"
    has_exact_velocity = True

    def __init__(self, major_radius=1.0, minor_radius=2.0 ** -0.5):
        if not 0 < minor_radius < major_radius:
            raise ValueError("torus radii must satisfy 0 < r < R")
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)

    @staticmethod
    def clifford(scale=1.0):
        return Torus(major_radius=scale, minor_radius=scale / np.sqrt(2.0))

    def implicit(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.hypot(p[..., 0], p[..., 1])
        return np.hypot(rho - self.major_radius, p[..., 2]) - self.minor_radius

    def minor_radius_at(self, phi):
        return np.broadcast_to(self.minor_radius, np.shape(phi)).astype(float)

    def param_point(self, theta, phi):
        """Embedding of the (minor, major) angles."""
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        r = self.minor_radius_at(phi)
        ring = self.major_radius + r * np.cos(theta)
        return np.stack([ring * np.cos(phi), ring * np.sin(phi), r * np.sin(theta)], axis=-1)

    def project(self, p):
        p = np.asarray(p, dtype=float)
        big_r, small_r = self.major_radius, self.minor_radius
        rho = np.hypot(p[..., 0], p[..., 1])
        if np.any(rho < 1e-300):
            raise ProjectionError("torus: cannot project points on the symmetry axis")
        e_rho = np.stack([p[..., 0] / rho, p[..., 1] / rho, np.zeros_like(rho)], axis=-1)
        center = big_r * e_rho
        d = p - center
        dist = np.linalg.norm(d, axis=-1)
        # points on the tube center circle are equidistant from a full minor
        # circle; pick the inner-equator representative
        degenerate = dist < 1e-14
        direction = np.where(degenerate[..., None], -e_rho, d / np.where(degenerate, 1.0, dist)[..., None])
        return center + small_r * direction

    def _angles(self, p):
        rho = np.hypot(p[..., 0], p[..., 1])
        s = np.hypot(rho - self.major_radius, p[..., 2])
        cos_t = (rho - self.major_radius) / s
        sin_t = p[..., 2] / s
        e_rho = np.stack([p[..., 0] / rho, p[..., 1] / rho, np.zeros_like(rho)], axis=-1)
        return cos_t, sin_t, e_rho

    def exact_fields(self, p):
        p = np.asarray(p, dtype=float)
        self.check_on_surface(p)
        big_r, small_r = self.major_radius, self.minor_radius
        cos_t, sin_t, e_rho = self._angles(p)
        ez = np.zeros_like(e_rho)
        ez[..., 2] = 1.0
        nu = cos_t[..., None] * e_rho + sin_t[..., None] * ez
        # unit tangents along the minor circle and the ring direction
        t_minor = -sin_t[..., None] * e_rho + cos_t[..., None] * ez
        t_ring = np.stack([-e_rho[..., 1], e_rho[..., 0], np.zeros_like(cos_t)], axis=-1)
        ring = big_r + small_r * cos_t
        k1 = np.full(cos_t.shape, 1.0 / small_r)
        k2 = cos_t / ring
        a_mat = (k1[..., None, None] * t_minor[..., :, None] * t_minor[..., None, :]
                 + k2[..., None, None] * t_ring[..., :, None] * t_ring[..., None, :])
        mean = k1 + k2
        gauss = k1 * k2
        abs_a2 = k1 ** 2 + k2 ** 2
        cubic = -0.5 * mean ** 3 + abs_a2 * mean
        # H(theta) = 1/r + cos(theta)/ring gives dH/dtheta = -R sin(theta)/ring^2,
        # and the axisymmetric Laplace-Beltrami reduces to an ordinary derivative
        dh_dtheta = -big_r * sin_t / ring ** 2
        z = (dh_dtheta / small_r)[..., None] * t_minor
        lap_h = -big_r * (ring * cos_t + small_r * sin_t ** 2) / (small_r ** 2 * ring ** 3)
        return ExactFields(nu=nu, H=mean, K=gauss, A=a_mat, absA2=abs_a2, Q=cubic,
                           lap_H=lap_h, V=lap_h + cubic, z=z)


class Ellipsoid(_ImplicitSurface):
    """Triaxial ellipsoid x^2/a^2 + y^2/b^2 + z^2/c^2 = 1."""

    name = "ellipsoid"

    def __init__(self, a=1.0, b=1.0, c=1.0):
        if min(a, b, c) <= 0:
            raise ValueError("ellipsoid semi-axes must be positive")
        self.a, self.b, self.c = float(a), float(b), float(c)

    def _implicit_expr(self, x, y, z):
        return (x / self.a) ** 2 + (y / self.b) ** 2 + (z / self.c) ** 2 - 1

    def from_unit_sphere(self, q):
        q = np.asarray(q, dtype=float)
        return q * np.array([self.a, self.b, self.c])


class RedBloodCell(_ImplicitSurface):
    """Axisymmetric biconcave shape.

    Profile with rho^2 = x^2 + y^2 in [0, 1]:

        z = +- 1/2 sqrt(1 - rho^2) (c0 + c1 rho^2 + c2 rho^4)

    encoded as the smooth level set z^2 - (1 - rho^2) q(rho^2)^2 / 4 = 0.
    The default coefficients are the classical biconcave-disc fit.
    """

    name = "red_blood_cell"

    def __init__(self, c0=0.207161, c1=2.002558, c2=-1.122762):
        self.c0, self.c1, self.c2 = float(c0), float(c1), float(c2)

    def _implicit_expr(self, x, y, z):
        u = x ** 2 + y ** 2
        q = self.c0 + self.c1 * u + self.c2 * u ** 2
        return z ** 2 - (1 - u) * q ** 2 / 4

    def from_unit_sphere(self, q):
        q = np.asarray(q, dtype=float)
        u = q[..., 0] ** 2 + q[..., 1] ** 2
        factor = 0.5 * (self.c0 + self.c1 * u + self.c2 * u ** 2)
        out = q.copy()
        out[..., 2] = q[..., 2] * factor
        return out


class PerturbedTorus(_ImplicitSurface):
    """Torus whose minor radius is modulated along the ring.

    The tube radius is r(phi) = r (1 + eps cos(m phi)) with phi the major
    angle; eps = 0 recovers the round torus.
    """

    name = "perturbed_torus"

    def __init__(self, major_radius=1.0, minor_radius=2.0 ** -0.5, epsilon=0.2, m=6):
        if not 0 < minor_radius < major_radius:
            raise ValueError("torus radii must satisfy 0 < r < R")
        if not 0 <= epsilon < 1:
            raise ValueError("perturbation amplitude must lie in [0, 1)")
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)
        self.epsilon = float(epsilon)
        self.m = int(m)

    def _implicit_expr(self, x, y, z):
        rho = sp.sqrt(x ** 2 + y ** 2)
        s = sp.sqrt((rho - self.major_radius) ** 2 + z ** 2)
        phi = sp.atan2(y, x)
        return s - self.minor_radius * (1 + self.epsilon * sp.cos(self.m * phi))

    def minor_radius_at(self, phi):
        phi = np.asarray(phi, dtype=float)
        return self.minor_radius * (1.0 + self.epsilon * np.cos(self.m * phi))

    def param_point(self, theta, phi):
        theta = np.asarray(theta, dtype=float)
        phi = np.asarray(phi, dtype=float)
        r = self.minor_radius_at(phi)
        ring = self.major_radius + r * np.cos(theta)
        return np.stack([ring * np.cos(phi), ring * np.sin(phi), r * np.sin(theta)], axis=-1)


_KINDS = {
    "sphere": Sphere,
    "torus": Torus,
    "ellipsoid": Ellipsoid,
    "red_blood_cell": RedBloodCell,
    "perturbed_torus": PerturbedTorus,
}


def make_surface(kind, **params):
    """Build a surface by kind name; unknown kinds and parameters raise."""
    try:
        cls = _KINDS[kind]
    except KeyError:
        raise SurfaceError(f"unknown surface kind '{kind}' (choose from {sorted(_KINDS)})")
    try:
        return cls(**params)
    except TypeError as exc:
        raise SurfaceError(f"bad parameters for surface '{kind}': {exc}") from None

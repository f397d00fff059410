"""Band-limited scalar fields on the unit sphere.

The discretization is pseudo-spectral: Gauss-Legendre nodes in mu = cos(theta)
for the colatitude, a uniform periodic grid for the longitude, and real
spherical harmonics normalized so that the square of every basis function
integrates to 1 over the sphere.  With ``n_theta >= L + 1`` and
``n_phi >= 2L + 1`` the analysis/synthesis pair is exact on fields of degree
at most L, the quadrature integrates products of two such fields exactly,
and the Laplace-Beltrami operator is diagonal (eigenvalue -l(l+1)) in
coefficient space.

Fields are immutable values and every operation here is a pure function, so
concurrent use needs no coordination.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateFieldError",
    "GridSpec",
    "ScalarField",
    "constant",
    "from_coefficients",
    "harmonic_field",
    "integrate",
    "laplacian",
    "make_grid",
    "mean",
    "project",
    "projection_residual",
    "quadrature_weights",
    "sample",
    "to_coefficients",
]


class DegenerateFieldError(ValueError):
    """A pointwise operation hit a zero (or negative, where positivity is
    required) node value, e.g. the reciprocal of a field with a zero node."""


@dataclass(frozen=True)
class GridSpec:
    """Quadrature grid exact for synthesis/analysis up to degree ``band_limit``.

    Colatitude nodes are the Gauss-Legendre nodes in mu = cos(theta) with
    their weights; longitudes are uniform with spacing 2*pi/n_phi.
    """

    band_limit: int
    n_theta: int
    n_phi: int

    def __post_init__(self):
        L = self.band_limit
        if L < 2:
            raise ValueError(f"invalid band limit: L must be >= 2, got {L}")
        if self.n_theta < L + 1:
            raise ValueError(
                f"n_theta={self.n_theta} too small for band limit {L}; need >= {L + 1}"
            )
        if self.n_phi < 2 * L + 1:
            raise ValueError(
                f"n_phi={self.n_phi} too small for band limit {L}; need >= {2 * L + 1}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def theta(self) -> np.ndarray:
        """Colatitude nodes, ascending in (0, pi); poles are excluded."""
        return _machinery(self).theta

    @property
    def phi(self) -> np.ndarray:
        """Longitude nodes, uniform in [0, 2*pi)."""
        return _machinery(self).phi_nodes


def make_grid(L: int) -> GridSpec:
    """Grid with the default dealiasing sizes for band limit L.

    n_theta = ceil((3L+3)/2) and n_phi = 3L+3, sized for the cubic
    nonlinearity of the radial flow.
    """
    if L < 2:
        raise ValueError(f"invalid band limit: L must be >= 2, got {L}")
    return GridSpec(band_limit=L, n_theta=-(-(3 * L + 3) // 2), n_phi=3 * L + 3)


def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights, Newton-refined in extended precision.

    numpy's raw nodes carry ~1 ulp error; the associated Legendre functions
    amplify that by ~l^2, which would break the 1e-10 eigenfunction tolerance
    at high band limits.
    """
    x0, _ = np.polynomial.legendre.leggauss(n)
    x = x0.astype(np.longdouble)

    def legendre_pair(x):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1)
        return p1, dp

    for _ in range(3):
        p, dp = legendre_pair(x)
        x = x - p / dp
    _, dp = legendre_pair(x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    return x.astype(float), w.astype(float)


def _legendre_table(L: int, mu: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre table P[m, l, node], zero for l < m.

    Normalization fixed so that int_{-1}^{1} P[m,l]^2 dmu = 1/(2*pi); the real
    harmonics built from these then satisfy "integral of Y^2 over the sphere
    equals 1".  Standard ascending-degree recursion, accumulated in
    longdouble for the same reason as the nodes.
    """
    ld = np.longdouble
    mu_ld = mu.astype(ld)
    P = np.zeros((L + 1, L + 1, len(mu)), dtype=ld)
    sin_t = np.sqrt(1.0 - mu_ld**2)
    P[0, 0] = math.sqrt(1.0 / (4.0 * math.pi))
    for m in range(1, L + 1):
        P[m, m] = np.sqrt((2 * m + 1) / ld(2 * m)) * sin_t * P[m - 1, m - 1]
    for m in range(L + 1):
        if m + 1 <= L:
            P[m, m + 1] = np.sqrt(ld(2 * m + 3)) * mu_ld * P[m, m]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * ld(l) * l - 1.0) / (ld(l) * l - m * m))
            b = np.sqrt((ld(l - 1) ** 2 - m * m) / (4.0 * ld(l - 1) ** 2 - 1.0))
            P[m, l] = a * (mu_ld * P[m, l - 1] - b * P[m, l - 2])
    return P.astype(float)


@dataclass(frozen=True)
class _Machinery:
    mu: np.ndarray
    w_theta: np.ndarray
    theta: np.ndarray
    phi_nodes: np.ndarray
    plm: np.ndarray        # (L+1, L+1, n_theta)
    kappa: np.ndarray      # sqrt(2) for m >= 1, 1 for m = 0
    w2d: np.ndarray        # full quadrature weights, (n_theta, n_phi)
    degree: np.ndarray     # l = 0..L


@functools.lru_cache(maxsize=None)
def _machinery(grid: GridSpec) -> _Machinery:
    L = grid.band_limit
    mu, w = _gauss_legendre(grid.n_theta)
    order = np.argsort(-mu)  # theta ascending, north to south
    mu, w = mu[order], w[order]
    kappa = np.full(L + 1, math.sqrt(2.0))
    kappa[0] = 1.0
    machinery = _Machinery(
        mu=mu,
        w_theta=w,
        theta=np.arccos(mu),
        phi_nodes=2.0 * np.pi * np.arange(grid.n_phi) / grid.n_phi,
        plm=_legendre_table(L, mu),
        kappa=kappa,
        w2d=np.outer(w, np.full(grid.n_phi, 2.0 * np.pi / grid.n_phi)),
        degree=np.arange(L + 1, dtype=float),
    )
    for arr in vars(machinery).values():
        arr.setflags(write=False)
    return machinery


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A real scalar field stored as values on the quadrature grid.

    Arithmetic operators act nodewise and accept scalars or fields on the
    same grid.  Nonlinear results are *not* re-projected automatically; the
    flow module projects where its contract requires it.
    """

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    # -- pointwise algebra -------------------------------------------------

    def _binary(self, other, op) -> "ScalarField":
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return ScalarField(self.grid, op(self.values, other.values))
        return ScalarField(self.grid, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return ScalarField(self.grid, float(other) - self.values)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, ScalarField):
            return self * other.reciprocal()
        return ScalarField(self.grid, self.values / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * float(other)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __pow__(self, p):
        p = float(p)
        if p < 0 and self.min_abs() == 0.0:
            raise DegenerateFieldError("negative power of a field with a zero node")
        return ScalarField(self.grid, self.values**p)

    def reciprocal(self) -> "ScalarField":
        if self.min_abs() == 0.0:
            raise DegenerateFieldError("reciprocal of a field with a zero node")
        return ScalarField(self.grid, 1.0 / self.values)

    # -- reductions ----------------------------------------------------------

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    def min_abs(self) -> float:
        return float(np.abs(self.values).min())

    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())


def constant(grid: GridSpec, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def sample(grid: GridSpec, fn) -> ScalarField:
    """Sample fn(theta, phi) at the grid nodes (no projection applied)."""
    theta, phi = np.meshgrid(grid.theta, grid.phi, indexing="ij")
    return ScalarField(grid, np.asarray(fn(theta, phi), dtype=float))


def quadrature_weights(grid: GridSpec) -> np.ndarray:
    """Full 2-D quadrature weights; sum(w * f.values) integrates f."""
    return _machinery(grid).w2d


def integrate(f: ScalarField) -> float:
    """Integral of f over the unit sphere (solid-angle measure).

    Exact for integrands of polynomial degree <= 2*n_theta - 1 in cos(theta)
    times Fourier orders <= n_phi - 1.
    """
    return float(np.sum(_machinery(f.grid).w2d * f.values))


def mean(f: ScalarField) -> float:
    """Sphere average, integrate(f) / 4*pi."""
    return integrate(f) / (4.0 * math.pi)


# -- transforms ---------------------------------------------------------------
#
# Coefficients are packed into a real array C of shape (L+1, 2L+1) with
# C[l, L+m] the cosine-branch coefficient for m >= 0 and C[l, L-m] the
# sine-branch coefficient for m >= 1.  Entries with |m| > l are zero.


def to_coefficients(f: ScalarField) -> np.ndarray:
    """Real spherical-harmonic analysis of the nodal values."""
    g = f.grid
    L = g.band_limit
    M = _machinery(g)
    spec = np.fft.rfft(f.values, axis=1)[:, : L + 1]
    fac = 2.0 * np.pi / g.n_phi
    cos_part = (fac * spec.real) * M.w_theta[:, None]
    sin_part = (-fac * spec.imag) * M.w_theta[:, None]
    A = np.einsum("mli,im->lm", M.plm, cos_part) * M.kappa
    B = np.einsum("mli,im->lm", M.plm, sin_part) * M.kappa
    coeffs = np.zeros((L + 1, 2 * L + 1))
    coeffs[:, L:] = A
    coeffs[:, :L] = B[:, 1:][:, ::-1]
    return coeffs


def from_coefficients(grid: GridSpec, coeffs: np.ndarray) -> ScalarField:
    """Synthesis: nodal values of the field with the given coefficients."""
    L = grid.band_limit
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (L + 1, 2 * L + 1):
        raise ValueError(
            f"coefficient array must have shape {(L + 1, 2 * L + 1)}, got {coeffs.shape}"
        )
    M = _machinery(grid)
    A = coeffs[:, L:] * M.kappa
    B = np.zeros((L + 1, L + 1))
    B[:, 1:] = coeffs[:, :L][:, ::-1]
    B *= M.kappa
    gc = np.einsum("mli,lm->im", M.plm, A)
    gs = np.einsum("mli,lm->im", M.plm, B)
    H = np.zeros((grid.n_theta, grid.n_phi // 2 + 1), dtype=complex)
    H[:, 0] = grid.n_phi * gc[:, 0]
    H[:, 1 : L + 1] = (grid.n_phi / 2.0) * (gc[:, 1:] - 1j * gs[:, 1:])
    return ScalarField(grid, np.fft.irfft(H, n=grid.n_phi, axis=1))


def project(f: ScalarField) -> ScalarField:
    """Orthogonal projection onto the band limit of the grid."""
    return from_coefficients(f.grid, to_coefficients(f))


def projection_residual(f: ScalarField) -> float:
    """Energy fraction discarded by project(f), in [0, 1]."""
    total = integrate(f * f)
    if total <= 0.0:
        return 0.0
    kept = float(np.sum(to_coefficients(f) ** 2))
    return max(0.0, 1.0 - kept / total)


def laplacian(f: ScalarField) -> ScalarField:
    """Spectral Laplace-Beltrami operator.

    Equals the synthesis of the coefficients multiplied by -l(l+1); in
    particular the result integrates to zero and degree-l fields are
    eigenfields with eigenvalue -l(l+1).
    """
    g = f.grid
    M = _machinery(g)
    coeffs = to_coefficients(f)
    coeffs *= -(M.degree * (M.degree + 1.0))[:, None]
    return from_coefficients(g, coeffs)


def harmonic_field(grid: GridSpec, l: int, m: int) -> ScalarField:
    """Nodal samples of the real orthonormal harmonic of degree l, order m.

    m >= 0 selects the cosine branch, m < 0 the sine branch.  Degrees above
    the grid band limit are allowed (useful for quadrature exactness checks);
    such fields alias under analysis.
    """
    if not (0 <= abs(m) <= l):
        raise ValueError(f"need |m| <= l, got l={l}, m={m}")
    M = _machinery(grid)
    table = _legendre_table(l, M.mu) if l > grid.band_limit else M.plm
    radial = table[abs(m), l]
    if m == 0:
        values = np.repeat(radial[:, None], grid.n_phi, axis=1)
    elif m > 0:
        values = math.sqrt(2.0) * radial[:, None] * np.cos(m * M.phi_nodes)[None, :]
    else:
        values = math.sqrt(2.0) * radial[:, None] * np.sin(-m * M.phi_nodes)[None, :]
    return ScalarField(grid, values)

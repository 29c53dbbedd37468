"""Convex integrands with (p,q)-growth: evaluation, gradients, conjugates,
and the monotone truncated-conjugate approximation sequence.

All point arguments accept arrays of shape (..., dim); scalar results then
have shape (...).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConvergenceError, ConvexityError

POWER = "power"
ANISOTROPIC_LOG = "anisotropic_log"
TRUNCATED_CONJUGATE = "truncated_conjugate"
MOREAU_SMOOTHED = "moreau_smoothed"
TABULATED = "tabulated"

FAMILIES = (POWER, ANISOTROPIC_LOG, TRUNCATED_CONJUGATE, MOREAU_SMOOTHED, TABULATED)

DEFAULT_BOX_RADIUS = 10.0


@dataclass(frozen=True, eq=False)
class IntegrandSpec:
    """A convex integrand F together with its growth data.

    p is the coercivity exponent, q the growth exponent (1 < p <= q); ell and
    L are the lower/upper growth constants, nu the strict-convexity constant
    (None means "calibrate on demand", see :func:`calibrate_h2_constant`).
    """

    family: str
    p: float
    q: float
    dim: int
    ell: float
    L: float
    nu: float | None = None
    alpha_log: float = 0.0
    trunc_radius: float | None = None
    moreau_eps: float | None = None
    table: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown integrand family {self.family!r}")
        if not (1.0 < self.p <= self.q):
            raise ValueError(f"exponents must satisfy 1 < p <= q, got p={self.p}, q={self.q}")
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not (0.0 < self.ell <= self.L):
            raise ValueError(f"growth constants must satisfy 0 < ell <= L, got {self.ell}, {self.L}")
        if self.family in (TRUNCATED_CONJUGATE, MOREAU_SMOOTHED):
            if self.trunc_radius is None or self.trunc_radius <= 0:
                raise ValueError("truncated families need trunc_radius > 0")
        if self.family == MOREAU_SMOOTHED and (self.moreau_eps is None or self.moreau_eps <= 0):
            raise ValueError("moreau_smoothed needs moreau_eps > 0")
        if self.family == ANISOTROPIC_LOG:
            if self.dim != 2:
                raise ValueError("anisotropic_log is a planar integrand (dim=2)")
            if self.alpha_log < 0:
                raise ValueError("alpha_log must be >= 0")

    @property
    def pprime(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def qprime(self) -> float:
        return self.q / (self.q - 1.0)

    @property
    def is_radial(self) -> bool:
        return self.family in (POWER, TRUNCATED_CONJUGATE, MOREAU_SMOOTHED)


def power_integrand(p: float, dim: int = 1) -> IntegrandSpec:
    """F(xi) = |xi|^p / p, the model p-growth integrand."""
    return IntegrandSpec(family=POWER, p=p, q=p, dim=dim, ell=1.0 / p, L=1.0 / p,
                         nu=0.5 if p == 2.0 else None)


def anisotropic_log_integrand(p: float, q: float, alpha: float, ell: float = 1e-2,
                              L: float | None = None) -> IntegrandSpec:
    """F(xi) = |xi1-xi2|^q + |xi1+xi2|^p * log^alpha(1+|xi1|) on the plane.

    The stored ell is nominal: the lower p-growth bound fails in a
    neighbourhood of the origin along the two symmetry diagonals (the log
    factor, or the p-term itself, vanishes there), which
    :func:`check_growth` and :func:`check_convexity` surface.
    """
    if L is None:
        L = 2.0 ** q + 2.0 ** p * math.log(2.0) ** alpha + 1.0
    return IntegrandSpec(family=ANISOTROPIC_LOG, p=p, q=q, dim=2, ell=ell, L=L,
                         alpha_log=alpha)


def truncated_power_integrand(p: float, radius: float, dim: int = 1) -> IntegrandSpec:
    """Truncated-conjugate regularization of |xi|^p/p at dual radius R.

    Equals |xi|^p/p while |xi|^(p-1) <= R and grows linearly with slope R
    beyond; for p = 2 this is the Huber function.
    """
    return IntegrandSpec(family=TRUNCATED_CONJUGATE, p=p, q=p, dim=dim,
                         ell=1.0 / p, L=1.0 / p, trunc_radius=radius)


def moreau_power_integrand(p: float, radius: float, eps: float, dim: int = 1) -> IntegrandSpec:
    """Moreau envelope (parameter eps) of the truncated power integrand."""
    return IntegrandSpec(family=MOREAU_SMOOTHED, p=p, q=p, dim=dim,
                         ell=1.0 / p, L=1.0 / p, trunc_radius=radius, moreau_eps=eps)


def tabulated_integrand(points, values, grads=None, p: float = 2.0, q: float | None = None,
                        dim: int | None = None) -> IntegrandSpec:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float)
    if dim is None:
        dim = points.shape[1]
    if grads is not None:
        grads = np.asarray(grads, dtype=float)
    table = (points, values, grads)
    return IntegrandSpec(family=TABULATED, p=p, q=q if q is not None else p, dim=dim,
                         ell=1.0 / p, L=max(1.0 / p, float(values.max(initial=1.0))),
                         table=table)


# ---------------------------------------------------------------------------
# radial profiles

def _trunc_kink(p: float, R: float) -> float:
    # |xi| beyond which the conjugate truncation at radius R is active
    return R ** (1.0 / (p - 1.0))


def _power_profile(p, r):
    return r ** p / p


def _power_dprofile(p, r):
    return r ** (p - 1.0)


def _trunc_profile(p, R, r):
    rk = _trunc_kink(p, R)
    pp = p / (p - 1.0)
    return np.where(r <= rk, r ** p / p, R * r - R ** pp / pp)


def _trunc_dprofile(p, R, r):
    return np.minimum(r ** (p - 1.0), R)


def _moreau_prox(p, R, eps, r):
    """Radial prox of the truncated profile: argmin_t g(t) + (r-t)^2/(2 eps)."""
    r = np.asarray(r, dtype=float)
    rk = _trunc_kink(p, R)
    if p == 2.0:
        t_inner = r / (1.0 + eps)
    else:
        # monotone root of eps*t^(p-1) + t = r on [0, min(r, rk)]
        lo = np.zeros_like(r)
        hi = np.minimum(r, rk)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            too_low = eps * mid ** (p - 1.0) + mid < r
            lo = np.where(too_low, mid, lo)
            hi = np.where(too_low, hi, mid)
        t_inner = 0.5 * (lo + hi)
    outer = r > rk + eps * R
    return np.where(outer, r - eps * R, np.minimum(t_inner, rk))


def _moreau_profile(p, R, eps, r):
    t = _moreau_prox(p, R, eps, r)
    return _trunc_profile(p, R, t) + (r - t) ** 2 / (2.0 * eps)


def _moreau_dprofile(p, R, eps, r):
    t = _moreau_prox(p, R, eps, r)
    return (r - t) / eps


def _radial_parts(F: IntegrandSpec):
    if F.family == POWER:
        return (lambda r: _power_profile(F.p, r)), (lambda r: _power_dprofile(F.p, r))
    if F.family == TRUNCATED_CONJUGATE:
        return (lambda r: _trunc_profile(F.p, F.trunc_radius, r)), \
               (lambda r: _trunc_dprofile(F.p, F.trunc_radius, r))
    if F.family == MOREAU_SMOOTHED:
        return (lambda r: _moreau_profile(F.p, F.trunc_radius, F.moreau_eps, r)), \
               (lambda r: _moreau_dprofile(F.p, F.trunc_radius, F.moreau_eps, r))
    raise ValueError(f"{F.family} is not radial")


# ---------------------------------------------------------------------------
# evaluation and gradient

def _check_points(F: IntegrandSpec, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape[-1] != F.dim:
        raise ValueError(f"point dimension {xi.shape[-1]} != integrand dim {F.dim}")
    if not np.all(np.isfinite(xi)):
        raise ValueError("non-finite input components")
    return xi


def eval_integrand(F: IntegrandSpec, xi) -> np.ndarray | float:
    """Evaluate F at xi (shape (..., dim) -> shape (...))."""
    xi = _check_points(F, xi)
    scalar = xi.ndim == 1
    if F.is_radial:
        profile, _ = _radial_parts(F)
        out = profile(np.linalg.norm(xi, axis=-1))
    elif F.family == ANISOTROPIC_LOG:
        x1, x2 = xi[..., 0], xi[..., 1]
        u = np.abs(x1 - x2)
        v = np.abs(x1 + x2)
        lg = np.log1p(np.abs(x1))
        logpow = np.ones_like(lg) if F.alpha_log == 0.0 else lg ** F.alpha_log
        out = u ** F.q + v ** F.p * logpow
    elif F.family == TABULATED:
        out = _tabulated_lookup(F, xi, column="value")
    else:  # pragma: no cover
        raise ValueError(F.family)
    return float(out) if scalar else out


def grad_integrand(F: IntegrandSpec, xi) -> np.ndarray:
    """Gradient F'(xi), same leading shape as xi."""
    xi = _check_points(F, xi)
    if F.is_radial:
        _, dprofile = _radial_parts(F)
        r = np.linalg.norm(xi, axis=-1)
        safe = np.where(r > 0.0, r, 1.0)
        return (dprofile(r) / safe)[..., None] * xi
    if F.family == ANISOTROPIC_LOG:
        p, q, alpha = F.p, F.q, F.alpha_log
        x1, x2 = xi[..., 0], xi[..., 1]
        u = x1 - x2
        v = x1 + x2
        du = q * np.abs(u) ** (q - 1.0) * np.sign(u)
        lg = np.log1p(np.abs(x1))
        logpow = np.ones_like(lg) if alpha == 0.0 else lg ** alpha
        dv = p * np.abs(v) ** (p - 1.0) * np.sign(v) * logpow
        g1 = du + dv
        g2 = -du + dv
        if alpha > 0.0:
            mask = lg > 0.0
            extra = np.zeros_like(lg)
            extra[mask] = (np.abs(v) ** p * alpha * lg ** (alpha - 1.0)
                           * np.sign(x1) / (1.0 + np.abs(x1)))[mask]
            g1 = g1 + extra
        return np.stack([g1, g2], axis=-1)
    if F.family == TABULATED:
        if F.table[2] is None:
            raise NotImplementedError("tabulated integrand has no gradient data")
        return _tabulated_lookup(F, xi, column="grad")
    raise ValueError(F.family)  # pragma: no cover


def _tabulated_lookup(F: IntegrandSpec, xi, column: str):
    points, values, grads = F.table
    xi2 = np.atleast_2d(xi)
    dist = np.linalg.norm(xi2[:, None, :] - points[None, :, :], axis=-1)
    idx = np.argmin(dist, axis=1)
    nearest = dist[np.arange(len(idx)), idx]
    if np.any(nearest > 1e-9):
        raise ValueError("tabulated integrand queried away from its sample points")
    out = values[idx] if column == "value" else grads[idx]
    if np.ndim(xi) == 1:
        return float(out[0]) if column == "value" else out[0]
    return out


def vp_map(p: float, xi) -> np.ndarray:
    """The strong-convergence gauge (1+|xi|^2)^((p-2)/4) * xi."""
    if p <= 1.0:
        raise ValueError("vp_map needs p > 1")
    xi = np.asarray(xi, dtype=float)
    w = (1.0 + np.sum(xi * xi, axis=-1)) ** ((p - 2.0) / 4.0)
    return w[..., None] * xi


# ---------------------------------------------------------------------------
# conjugation

def _power_conjugate(p: float, s):
    pp = p / (p - 1.0)
    return s ** pp / pp


def conjugate(F: IntegrandSpec, zeta, tol: float = 1e-10):
    """Fenchel conjugate F*(zeta) = sup_xi (<zeta, xi> - F(xi)).

    Closed forms are used for the radial built-ins; the planar anisotropic
    family is maximized numerically (ascent with backtracking plus a Newton
    polish).  Dual points outside the domain of F* (possible for the
    truncated families, whose conjugate is +inf beyond the truncation ball)
    return inf.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    zeta = _check_points(F, zeta)
    scalar = zeta.ndim == 1
    s = np.linalg.norm(zeta, axis=-1)
    if F.family == POWER:
        out = _power_conjugate(F.p, s)
    elif F.family in (TRUNCATED_CONJUGATE, MOREAU_SMOOTHED):
        R = F.trunc_radius
        inside = s <= R * (1.0 + 1e-9)
        s_eff = np.minimum(s, R)
        out = _power_conjugate(F.p, s_eff)
        if F.family == MOREAU_SMOOTHED:
            out = out + 0.5 * F.moreau_eps * s_eff ** 2
        out = np.where(inside, out, np.inf)
    elif F.family == ANISOTROPIC_LOG:
        z2 = np.atleast_2d(zeta)
        out = np.array([_conjugate_ascent(F, z, tol) for z in z2])
        out = out.reshape(zeta.shape[:-1])
    elif F.family == TABULATED:
        points, values, _ = F.table
        z2 = np.atleast_2d(zeta)
        out = np.max(z2 @ points.T - values[None, :], axis=1).reshape(zeta.shape[:-1])
    else:  # pragma: no cover
        raise ValueError(F.family)
    return float(out) if scalar else out


def conjugate_radial_bisect(F: IntegrandSpec, s: float, tol: float = 1e-12,
                            r_max: float = 1e8) -> float:
    """Conjugate of a radial integrand by bisection on the stationarity
    equation profile'(r) = s.  Independent route used to cross-check the
    closed forms."""
    _, dprofile = _radial_parts(F)
    profile, _ = _radial_parts(F)
    if s <= 0.0:
        return -float(profile(np.float64(0.0)))
    lo, hi = 0.0, 1.0
    while dprofile(np.float64(hi)) < s:
        hi *= 2.0
        if hi > r_max:
            raise ConvergenceError("radial conjugate: slope never reaches s "
                                   "(dual point outside the domain of F*)",
                                   best=s * hi - float(profile(np.float64(hi))))
    while hi - lo > tol * (1.0 + hi):
        mid = 0.5 * (lo + hi)
        if dprofile(np.float64(mid)) < s:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    return s * r - float(profile(np.float64(r)))


def _conjugate_ascent(F: IntegrandSpec, zeta, tol, max_iters: int = 10_000) -> float:
    return _conjugate_ascent_point(F, zeta, tol, max_iters)[0]


def _conjugate_ascent_point(F: IntegrandSpec, zeta, tol, max_iters: int = 10_000):
    """Maximize <zeta, eta> - F(eta) by backtracked gradient ascent."""
    zeta = np.asarray(zeta, dtype=float)

    def val(e):
        return float(zeta @ e - eval_integrand(F, e))

    def grad(e):
        return zeta - grad_integrand(F, e)

    eta = np.zeros(F.dim)
    g = grad(eta)
    v = val(eta)
    step = 1.0 / (1.0 + np.linalg.norm(zeta))
    gtol = tol * (1.0 + np.linalg.norm(zeta))
    converged = False
    for _ in range(max_iters):
        if np.linalg.norm(g, ord=np.inf) <= gtol:
            converged = True
            break
        lam = 1.0
        gg = float(g @ g)
        while lam > 1e-18:
            cand = eta + lam * step * g
            vc = val(cand)
            if vc >= v + 1e-4 * lam * step * gg:
                break
            lam *= 0.5
        g_new = grad(cand)
        ds = cand - eta
        dy = g_new - g
        sy = float(-ds @ dy)
        step = min(max(float(ds @ ds) / sy, 1e-12), 1e12) if sy > 0 else step * 2.0
        eta, g, v = cand, g_new, vc
    if not converged:
        raise ConvergenceError("conjugate ascent hit the iteration cap",
                               best=v, bound_gap=float(np.linalg.norm(g)))
    # Newton polish on the 2x2 system to squeeze the stationarity residual
    for _ in range(8):
        g = grad(eta)
        if np.linalg.norm(g, ord=np.inf) <= 1e-13 * (1.0 + np.linalg.norm(zeta)):
            break
        h = 1e-6 * (1.0 + np.linalg.norm(eta))
        H = np.empty((F.dim, F.dim))
        for j in range(F.dim):
            dv = np.zeros(F.dim)
            dv[j] = h
            H[:, j] = (grad(eta + dv) - grad(eta - dv)) / (2.0 * h)
        try:
            delta = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(delta)):
            break
        cand = eta - delta
        if val(cand) >= val(eta):
            eta = cand
        else:
            break
    return val(eta), eta


def conjugate_with_argmax(F: IntegrandSpec, zeta, tol: float = 1e-10):
    """F*(zeta) together with a maximizing point xi*.

    For dual points outside the domain of F* the value is inf and xi* is
    None.
    """
    zeta = np.asarray(zeta, dtype=float)
    s = float(np.linalg.norm(zeta))
    direction = zeta / s if s > 0 else zeta
    if F.family == POWER:
        r = s ** (1.0 / (F.p - 1.0))
        return float(_power_conjugate(F.p, np.float64(s))), r * direction
    if F.family in (TRUNCATED_CONJUGATE, MOREAU_SMOOTHED):
        R = F.trunc_radius
        if s > R * (1.0 + 1e-9):
            return float("inf"), None
        s_eff = min(s, R)
        t = s_eff ** (1.0 / (F.p - 1.0))
        if F.family == MOREAU_SMOOTHED:
            r = t + F.moreau_eps * s_eff
            val = _power_conjugate(F.p, np.float64(s_eff)) + 0.5 * F.moreau_eps * s_eff ** 2
        else:
            r = t
            val = _power_conjugate(F.p, np.float64(s_eff))
        return float(val), r * direction
    if F.family == ANISOTROPIC_LOG:
        val, eta = _conjugate_ascent_point(F, zeta, tol)
        return val, eta
    if F.family == TABULATED:
        points, values, _ = F.table
        scores = points @ zeta - values
        i = int(np.argmax(scores))
        return float(scores[i]), points[i]
    raise ValueError(F.family)  # pragma: no cover


def fenchel_young_residual(F: IntegrandSpec, xi, zeta=None, tol: float = 1e-10) -> float:
    """F(xi) + F*(zeta) - <zeta, xi>, with zeta = F'(xi) by default.

    At zeta = F'(xi) the residual vanishes for convex F; for arbitrary zeta
    it is nonnegative.
    """
    xi = _check_points(F, xi)
    if zeta is None:
        zeta = grad_integrand(F, xi)
    else:
        zeta = _check_points(F, zeta)
    return float(eval_integrand(F, xi) + conjugate(F, zeta, tol=tol) - np.dot(zeta, xi))


# ---------------------------------------------------------------------------
# approximation sequence

@dataclass(frozen=True)
class ApproxSequenceEntry:
    k: int
    integrand: IntegrandSpec
    mu_k: float
    radius: float


def approx_seq(F: IntegrandSpec, k: int, box_radius: float, r_scale: float = 1.0,
               moreau: bool = False, moreau_eps: float | None = None) -> ApproxSequenceEntry:
    """k-th member of the monotone regularization sequence F_k.

    F_k is the conjugate of F* restricted to the ball of radius R_k =
    k*r_scale (optionally Moreau-smoothed with eps_k = 1/k^2), so
    F_k <= F_{k+1} <= F with equality once R_k covers the gradient range.
    mu_k is the measured coercivity defect max(ell*|xi|^p - F_k)_+ over the
    working box.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if box_radius <= 0:
        raise ValueError("box_radius must be positive")
    if F.family != POWER:
        raise NotImplementedError(
            "approximation sequence is built for power integrands; "
            f"family {F.family!r} has no tested truncated-conjugate form")
    radius = k * r_scale
    if moreau:
        eps = moreau_eps if moreau_eps is not None else 1.0 / k ** 2
        Fk = moreau_power_integrand(F.p, radius, eps, dim=F.dim)
    else:
        Fk = truncated_power_integrand(F.p, radius, dim=F.dim)
    rr = np.linspace(0.0, box_radius * math.sqrt(F.dim), 4097)
    profile, _ = _radial_parts(Fk)
    defect = F.ell * rr ** F.p - profile(rr)
    mu = float(np.maximum(defect, 0.0).max())
    return ApproxSequenceEntry(k=k, integrand=Fk, mu_k=mu, radius=radius)


# ---------------------------------------------------------------------------
# sampled checks and calibrations

@dataclass(frozen=True)
class ViBoundsReport:
    lower_ok: bool
    upper_ok: bool
    ratio: float
    bound: float
    constant: float


@lru_cache(maxsize=None)
def calibrate_vi_constant(dim: int, p: float, n_samples: int = 100_000,
                          seed: int = 7) -> float:
    """Sampled constant c(n,p) for the two-sided gauge-increment bound.

    One-time pass over n_samples random pairs spanning several scales,
    frozen (cached) afterwards; safety factor 1.1.
    """
    rng = np.random.default_rng(seed)
    scales = 10.0 ** rng.uniform(-3, 2, size=(n_samples, 1))
    xi = rng.uniform(-1.0, 1.0, size=(n_samples, dim)) * scales
    eta = rng.uniform(-1.0, 1.0, size=(n_samples, dim)) * scales
    keep = np.linalg.norm(xi - eta, axis=1) > 1e-12
    xi, eta = xi[keep], eta[keep]
    dv = vp_map(p, xi) - vp_map(p, eta)
    r = np.sum(dv * dv, axis=1) / np.sum((xi - eta) ** 2, axis=1)
    b = (1.0 + np.sum(xi * xi, axis=1) + np.sum(eta * eta, axis=1)) ** ((p - 2.0) / 2.0)
    ratio = r / b
    return 1.1 * float(max(ratio.max(), (1.0 / ratio).max()))


def check_vi_lemma_bounds(p: float, xi, eta, constant: float | None = None) -> ViBoundsReport:
    """Check c^-1 * b <= |V_p(xi)-V_p(eta)|^2/|xi-eta|^2 <= c * b."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.array_equal(xi, eta):
        raise ValueError("xi and eta must differ")
    if constant is None:
        constant = calibrate_vi_constant(xi.shape[-1], p)
    dv = vp_map(p, xi) - vp_map(p, eta)
    r = float(np.sum(dv * dv) / np.sum((xi - eta) ** 2))
    b = float((1.0 + xi @ xi + eta @ eta) ** ((p - 2.0) / 2.0))
    return ViBoundsReport(lower_ok=r >= b / constant, upper_ok=r <= constant * b,
                          ratio=r / b, bound=b, constant=constant)


@dataclass(frozen=True)
class H2Calibration:
    nu_hat: float
    min_ratio: float
    positive: bool
    n_samples: int


def bregman_gap(F: IntegrandSpec, xi, eta) -> np.ndarray | float:
    """F(xi) - F(eta) - <F'(eta), xi - eta> (>= 0 for convex F)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    g = grad_integrand(F, eta)
    return eval_integrand(F, xi) - eval_integrand(F, eta) - np.sum(g * (xi - eta), axis=-1)


def calibrate_h2_constant(F: IntegrandSpec, box_radius: float = 2.0,
                          n_samples: int = 100_000, seed: int = 11) -> H2Calibration:
    """Sampled ellipticity constant: min over pairs of Bregman/|tau V_p|^2.

    A non-positive minimum means the sampled pairs witness a convexity
    failure; the flag is surfaced rather than hidden.
    """
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-box_radius, box_radius, size=(n_samples, F.dim))
    eta = rng.uniform(-box_radius, box_radius, size=(n_samples, F.dim))
    keep = np.linalg.norm(xi - eta, axis=1) > 1e-9
    xi, eta = xi[keep], eta[keep]
    breg = bregman_gap(F, xi, eta)
    dv = vp_map(F.p, xi) - vp_map(F.p, eta)
    denom = np.sum(dv * dv, axis=1)
    ratio = breg / denom
    mn = float(ratio.min())
    nu = mn / 1.1 if mn > 0 else mn * 1.1
    return H2Calibration(nu_hat=nu, min_ratio=mn, positive=mn > 0.0,
                         n_samples=int(len(ratio)))


def check_h2_gap(F: IntegrandSpec, xi, eta, nu_hat: float | None = None) -> float:
    """Bregman gap minus nu_hat * |V_p(xi) - V_p(eta)|^2 (>= 0 when the
    calibrated ellipticity holds)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if nu_hat is None:
        nu_hat = F.nu if F.nu is not None else calibrate_h2_constant(F).nu_hat
    dv = vp_map(F.p, xi) - vp_map(F.p, eta)
    return float(bregman_gap(F, xi, eta) - nu_hat * np.sum(dv * dv))


@dataclass(frozen=True)
class ConvexityReport:
    ok: bool
    worst_violation: float
    witness: tuple | None


def check_convexity(F: IntegrandSpec, n_pairs: int = 2048,
                    box_radius: float = DEFAULT_BOX_RADIUS, seed: int = 3) -> ConvexityReport:
    """Sampled midpoint-convexity check.

    Random segments in the working box are complemented by short segments
    straddling the coordinate axes and diagonals at several scales, where
    anisotropic integrands are most likely to fail.
    """
    rng = np.random.default_rng(seed)
    a = rng.uniform(-box_radius, box_radius, size=(n_pairs, F.dim))
    b = rng.uniform(-box_radius, box_radius, size=(n_pairs, F.dim))
    pairs = [(a, b)]
    if F.dim == 2:
        dirs = np.array([[1.0, 1.0], [1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = []
        deltas = []
        for d in dirs:
            perp = np.array([-d[1], d[0]])
            for t in np.linspace(0.25, 0.9 * box_radius, 12):
                for s in (0.02, 0.05, 0.1, 0.2):
                    centers.append(t * d)
                    deltas.append(s * perp)
                    centers.append(-t * d)
                    deltas.append(s * perp)
        centers = np.array(centers)
        deltas = np.array(deltas)
        pairs.append((centers + deltas, centers - deltas))
    worst = 0.0
    witness = None
    for a, b in pairs:
        viol = eval_integrand(F, 0.5 * (a + b)) - 0.5 * (eval_integrand(F, a)
                                                         + eval_integrand(F, b))
        i = int(np.argmax(viol))
        if viol[i] > worst:
            worst = float(viol[i])
            witness = (a[i].copy(), b[i].copy(), worst)
    ok = worst <= 1e-12 * (1.0 + abs(worst))
    return ConvexityReport(ok=ok, worst_violation=worst, witness=witness)


def require_convexity(F: IntegrandSpec, **kwargs) -> None:
    """Raise ConvexityError when the sampled check finds a violated segment."""
    if F.family == TABULATED:
        return
    report = check_convexity(F, **kwargs)
    if not report.ok:
        a, b, v = report.witness
        raise ConvexityError(
            f"integrand family {F.family!r} failed midpoint convexity by {v:.3e} "
            f"on the segment {a.tolist()} -- {b.tolist()}", witness=report.witness)


@dataclass(frozen=True)
class GrowthReport:
    lower_defect: float
    upper_defect: float
    lower_ok: bool
    upper_ok: bool


def check_growth(F: IntegrandSpec, n_samples: int = 4096,
                 box_radius: float = DEFAULT_BOX_RADIUS, seed: int = 5,
                 tol: float = 1e-10) -> GrowthReport:
    """Sampled two-sided growth check ell|xi|^p <= F <= L(1+|xi|^q).

    For the truncated families the lower defect is the working-box
    coercivity defect (compare mu_k), not an error.
    """
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-box_radius, box_radius, size=(n_samples, F.dim))
    vals = eval_integrand(F, xi)
    r = np.linalg.norm(xi, axis=1)
    lower = float(np.maximum(F.ell * r ** F.p - vals, 0.0).max())
    upper = float(np.maximum(vals - F.L * (1.0 + r ** F.q), 0.0).max())
    return GrowthReport(lower_defect=lower, upper_defect=upper,
                        lower_ok=lower <= tol, upper_ok=upper <= tol)


def h3_constant(F: IntegrandSpec, lam: float) -> float:
    """Scaling constant C(lam) with F(lam*xi) <= C(lam)*F(xi) for lam > 1."""
    if lam <= 1.0:
        raise ValueError("lam must exceed 1")
    if F.family in (POWER, TRUNCATED_CONJUGATE, MOREAU_SMOOTHED):
        return lam ** F.p
    if F.family == ANISOTROPIC_LOG:
        return lam ** (F.q + F.alpha_log)
    raise NotImplementedError(f"no scaling constant for family {F.family!r}")

"""Scalar free convolution: R transforms, Green's functions, and S transforms.

The central solver tracks the decaying branch g ~ 1/z of

    g = 1 / (z - R(g))

by a geometric homotopy in |z|: start far out where the fixed point is a
contraction around 1/z, certify the asymptotic normalization there, then walk
the scale down to the requested point, polishing with Newton at every stage.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

from .errors import (
    BranchUndecidedError,
    CenteredTransformError,
    ConvergenceError,
    FreeconvError,
)

# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalarTransform:
    """An R transform R(g) for a compactly supported spectral measure.

    r_deriv may be omitted; solvers fall back to a central difference.
    kappa1 = R(0) is stored explicitly because the S-transform machinery and
    the homotopy ladder both need it cheaply and exactly.
    cumulants, when present, lists (kappa1, kappa2, ...) up to some order.
    """

    name: str
    r_eval: Callable[[complex], complex]
    kappa1: complex
    r_deriv: Optional[Callable[[complex], complex]] = None
    cumulants: Optional[tuple] = None

    def deriv(self, g: complex) -> complex:
        if self.r_deriv is not None:
            return self.r_deriv(g)
        h = 1e-7 * (1.0 + abs(g))
        return (self.r_eval(g + h) - self.r_eval(g - h)) / (2.0 * h)


def constant_transform(c: complex, name: str = None) -> ScalarTransform:
    """Deterministic matrix c * I: R(g) = c identically."""
    return ScalarTransform(
        name=name or f"const({c})",
        r_eval=lambda g: c,
        r_deriv=lambda g: 0.0,
        kappa1=c,
        cumulants=(c,),
    )


def gaussian_transform(sigma: float = 1.0, name: str = None) -> ScalarTransform:
    """Centered hermitian Gaussian with variance sigma^2: R(g) = sigma^2 g."""
    s2 = float(sigma) ** 2
    return ScalarTransform(
        name=name or f"gaussian({sigma})",
        r_eval=lambda g: s2 * g,
        r_deriv=lambda g: s2,
        kappa1=0.0,
        cumulants=(0.0, s2),
    )


def shifted_gaussian_transform(shift: complex = 1.0, sigma: float = 1.0,
                               name: str = None) -> ScalarTransform:
    """Hermitian Gaussian plus shift * I: R(g) = shift + sigma^2 g."""
    s2 = float(sigma) ** 2
    return ScalarTransform(
        name=name or f"gaussian({sigma})+{shift}",
        r_eval=lambda g: shift + s2 * g,
        r_deriv=lambda g: s2,
        kappa1=shift,
        cumulants=(shift, s2),
    )


def free_add(ta: ScalarTransform, tb: ScalarTransform) -> ScalarTransform:
    """Free additive convolution: R transforms add."""
    cumulants = None
    if ta.cumulants is not None and tb.cumulants is not None:
        k = min(len(ta.cumulants), len(tb.cumulants))
        cumulants = tuple(ta.cumulants[i] + tb.cumulants[i] for i in range(k))
    deriv = None
    if ta.r_deriv is not None and tb.r_deriv is not None:
        deriv = lambda g: ta.r_deriv(g) + tb.r_deriv(g)
    return ScalarTransform(
        name=f"{ta.name}+{tb.name}",
        r_eval=lambda g: ta.r_eval(g) + tb.r_eval(g),
        r_deriv=deriv,
        kappa1=ta.kappa1 + tb.kappa1,
        cumulants=cumulants,
    )


# ---------------------------------------------------------------------------
# Green's function solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HolomorphicGreen:
    """One certified Green's-function value g(z) on the decaying branch.

    branch_certificate records (scale, residual) down the homotopy ladder; the
    first entry is the scale where the 1/z normalization was verified.
    """

    z: complex
    g: complex
    residual: float
    branch_certificate: tuple


def _stage_solve(r_eval, deriv, zs: complex, g: complex, tol: float):
    """Damped fixed point followed by Newton, at one fixed value zs."""
    for _ in range(200):
        denom = zs - r_eval(g)
        if denom == 0:
            g += tol  # nudge off the pole and keep going
            continue
        step = 1.0 / denom - g
        g += 0.5 * step
        if abs(step) < 0.25 * tol:
            break
    # Newton on f(g) = g (zs - R(g)) - 1, whose roots are exactly the fixed points
    for _ in range(60):
        rg = r_eval(g)
        f = g * (zs - rg) - 1.0
        if abs(f) < 1e-3 * tol:
            break
        fp = zs - rg - g * deriv(g)
        if fp == 0:
            break
        g -= f / fp
    denom = zs - r_eval(g)
    residual = abs(g - 1.0 / denom) if denom != 0 else math.inf
    return g, residual


def _scalar_green_ladder(r_eval, deriv, kappa1: complex, z: complex,
                         tol: float = 1e-12):
    """Solve g = 1/(z - R(g)) on the branch with g ~ 1/z at infinity.

    Returns (g, residual, certificate).  Raises BranchUndecidedError when the
    asymptotic normalization cannot be certified at any scale, and
    ConvergenceError when a ladder stage stalls above tolerance.
    """
    if z == 0:
        raise ConvergenceError("scalar Green's function needs z != 0")
    far = 10.0 * (1.0 + abs(kappa1))
    s_top = max(1.0, far / abs(z))

    # certify the decaying branch at the top of the ladder, growing if needed
    for _ in range(14):
        z_top = s_top * z
        g_top, res_top = _stage_solve(r_eval, deriv, z_top, 1.0 / z_top, tol)
        if res_top <= tol and abs(g_top - 1.0 / z_top) <= 10.0 / abs(z_top) ** 2:
            break
        s_top *= 4.0
    else:
        raise BranchUndecidedError(
            f"could not certify g ~ 1/z for transform at z = {z}: "
            "no decaying branch found at any homotopy scale")

    certificate = [(s_top, res_top)]
    n_stages = max(1, math.ceil(math.log(s_top) / math.log(1.6))) if s_top > 1.0 else 0
    g = g_top
    for k in range(1, n_stages + 1):
        scale = s_top ** (1.0 - k / n_stages)
        g, res = _stage_solve(r_eval, deriv, scale * z, g, tol)
        if res > tol:
            raise ConvergenceError(
                f"homotopy stage at scale {scale:.3g} stalled for z = {z}",
                residual=res)
        certificate.append((scale, res))
    return g, certificate[-1][1], tuple(certificate)


def green_from_r(transform: ScalarTransform, z: complex,
                 tol: float = 1e-12) -> HolomorphicGreen:
    """Evaluate the Green's function of the measure with the given R transform."""
    g, residual, certificate = _scalar_green_ladder(
        transform.r_eval, transform.deriv, transform.kappa1, z, tol)
    return HolomorphicGreen(z=z, g=g, residual=residual,
                            branch_certificate=certificate)


def green_derivative(transform: ScalarTransform, z: complex,
                     tol: float = 1e-12) -> complex:
    """dg/dz via implicit differentiation of g (z - R(g)) = 1."""
    g = green_from_r(transform, z, tol).g
    return -g * g / (1.0 - g * g * transform.deriv(g))


def density_real(transform: ScalarTransform, lam: float,
                 epsilon: float = 1e-6) -> float:
    """Spectral density on the real axis from two Green's evaluations.

    rho(lam) = (g(lam - i eps) - g(lam + i eps)) / (2 pi i); the imaginary
    part of that expression is pure numerical noise and must stay below 1e-10.
    """
    g_minus = green_from_r(transform, complex(lam, -epsilon)).g
    g_plus = green_from_r(transform, complex(lam, +epsilon)).g
    value = (g_minus - g_plus) / (2j * math.pi)
    if abs(value.imag) >= 1e-10:
        raise ConvergenceError(
            f"density at {lam} lost conjugate symmetry", residual=abs(value.imag))
    return value.real


# ---------------------------------------------------------------------------
# multiplication through the R system
# ---------------------------------------------------------------------------


class ProductGreens(NamedTuple):
    g: complex
    g_a: complex
    g_b: complex
    residual: float


def _product_aux(ta: ScalarTransform, tb: ScalarTransform, x: complex,
                 tol: float = 1e-13):
    """Solve the auxiliary pair g_a = x R_A(g_b), g_b = x R_B(g_a)."""
    ga = x * ta.kappa1
    gb = x * tb.kappa1
    for _ in range(120):
        na = x * ta.r_eval(gb)
        nb = x * tb.r_eval(ga)
        step = max(abs(na - ga), abs(nb - gb))
        ga += 0.6 * (na - ga)
        gb += 0.6 * (nb - gb)
        if step < 0.1 * tol:
            break
    # 2x2 Newton; exact in one step for affine R maps
    for _ in range(50):
        f1 = ga - x * ta.r_eval(gb)
        f2 = gb - x * tb.r_eval(ga)
        if max(abs(f1), abs(f2)) < 0.1 * tol:
            break
        j12 = -x * ta.deriv(gb)
        j21 = -x * tb.deriv(ga)
        det = 1.0 - j12 * j21
        if det == 0:
            break
        # solve [[1, j12], [j21, 1]] [da, db] = [f1, f2]
        da = (f1 - j12 * f2) / det
        db = (f2 - j21 * f1) / det
        ga -= da
        gb -= db
    res = max(abs(ga - x * ta.r_eval(gb)), abs(gb - x * tb.r_eval(ga)))
    if res > max(tol, 1e-11 * max(1.0, abs(x))):
        raise ConvergenceError(
            f"auxiliary product system stalled at x = {x}", residual=res)
    return ga, gb


def product_r_transform(ta: ScalarTransform, tb: ScalarTransform) -> ScalarTransform:
    """R transform of the free multiplicative convolution, as a standalone map.

    R_AB(x) = R_A(g_b) R_B(g_a) where (g_a, g_b) solve the auxiliary pair at x.
    Feeding this map to green_from_r yields the Green's function of A B.
    """

    def r_eval(x: complex) -> complex:
        ga, gb = _product_aux(ta, tb, x)
        return ta.r_eval(gb) * tb.r_eval(ga)

    return ScalarTransform(
        name=f"({ta.name})*({tb.name})",
        r_eval=r_eval,
        r_deriv=None,
        kappa1=ta.kappa1 * tb.kappa1,
        cumulants=None,
    )


def multiply_r_system(ta: ScalarTransform, tb: ScalarTransform, z: complex,
                      tol: float = 1e-12) -> ProductGreens:
    """Green's function of the product AB plus the auxiliary resolvents.

    Solves the coupled system g = 1/(z - R_A(g_b) R_B(g_a)), g_a = g R_A(g_b),
    g_b = g R_B(g_a) on the decaying branch and reports the worst residual of
    the three equations.
    """
    g = green_from_r(product_r_transform(ta, tb), z, tol).g
    ga, gb = _product_aux(ta, tb, g)
    denom = z - ta.r_eval(gb) * tb.r_eval(ga)
    r1 = abs(g - 1.0 / denom) if denom != 0 else math.inf
    r2 = abs(ga - g * ta.r_eval(gb))
    r3 = abs(gb - g * tb.r_eval(ga))
    residual = max(r1, r2, r3)
    if residual > 10.0 * tol:
        raise ConvergenceError(
            f"product system residuals did not close at z = {z}", residual=residual)
    return ProductGreens(g=g, g_a=ga, g_b=gb, residual=residual)


# ---------------------------------------------------------------------------
# S transforms
# ---------------------------------------------------------------------------


def s_from_r(transform: ScalarTransform, y: complex, tol: float = 1e-12) -> complex:
    """S transform from the functional equation S = 1 / R(y S).

    Seeded at 1/kappa1 and damped; undefined for centered transforms.
    """
    if transform.kappa1 == 0:
        raise CenteredTransformError()
    s = 1.0 / transform.kappa1
    for _ in range(400):
        r = transform.r_eval(y * s)
        if r == 0:
            raise ConvergenceError(f"R(y S) hit zero during S iteration at y = {y}")
        step = 1.0 / r - s
        s += 0.5 * step
        if abs(step) < 0.1 * tol:
            break
    for _ in range(50):
        r = transform.r_eval(y * s)
        f = s * r - 1.0
        if abs(f) < 1e-3 * tol:
            break
        fp = r + s * y * transform.deriv(y * s)
        if fp == 0:
            break
        s -= f / fp
    r = transform.r_eval(y * s)
    residual = abs(s * r - 1.0)
    if residual > tol:
        raise ConvergenceError(f"S iteration stalled at y = {y}", residual=residual)
    return s


def s_from_green(transform: ScalarTransform, y: complex, tol: float = 1e-11) -> complex:
    """S transform recovered from the Green's function alone.

    Inverts the moment map z -> z g(z) - 1 at y, then uses
    S(y) = (1 + y) / (y z*).  The inversion is a joint Newton iteration on the
    pair (z, g) of

        g (z - R(g)) = 1,        z g - 1 = y,

    seeded on the decaying branch by green_from_r far from the support and
    continued along a path in y.  The path detours into the complex plane, so
    the continuation passes around (not through) the branch point where the
    moment map's image folds at the support edge; beyond the fold the pair
    tracks the analytic continuation of the inverse, which is where the S
    transform lives for larger y.  Independent of s_from_r except for sharing
    the Green's solver.
    """
    if transform.kappa1 == 0:
        raise CenteredTransformError()
    if y == 0:
        raise FreeconvError("moment map inversion needs y != 0")

    y0 = min(1e-3, 0.5 * abs(y))
    z = transform.kappa1 * (1.0 + y0) / y0
    g = green_from_r(transform, z).g

    def newton_at(yk, z, g):
        for _ in range(60):
            rg = transform.r_eval(g)
            f1 = g * (z - rg) - 1.0
            f2 = z * g - 1.0 - yk
            if max(abs(f1), abs(f2)) < tol:
                return z, g, True
            a11 = g                                # dF1/dz
            a12 = z - rg - g * transform.deriv(g)  # dF1/dg
            a21 = g                                # dF2/dz
            a22 = z                                # dF2/dg
            det = a11 * a22 - a12 * a21
            if det == 0:
                return z, g, False
            dz = (f1 * a22 - a12 * f2) / det
            dg = (a11 * f2 - f1 * a21) / det
            z -= dz
            g -= dg
        return z, g, max(abs(f1), abs(f2)) < 1e3 * tol

    steps = 48
    ratio = y / y0
    for k in range(1, steps + 1):
        t = k / steps
        detour = cmath.exp(0.35j * math.sin(math.pi * t))
        yk = y0 * ratio ** t * (detour if k < steps else 1.0)
        z, g, converged = newton_at(yk, z, g)
        if not converged:
            raise ConvergenceError(
                f"moment map inversion stalled at y = {yk} (target {y})")
    return (1.0 + y) / (y * z)


def multiply_via_s(ta: ScalarTransform, tb: ScalarTransform, y: complex) -> complex:
    """S transform of the free product: S_AB(y) = S_A(y) S_B(y)."""
    return s_from_r(ta, y) * s_from_r(tb, y)


def assert_s_r_consistency(ta: ScalarTransform, tb: ScalarTransform, y: complex,
                           tol: float = 1e-8) -> complex:
    """Check the S route against the R route for the product at one point.

    Returns the common S_AB(y) value; raises FreeconvError if the two routes
    disagree beyond tol.
    """
    via_s = multiply_via_s(ta, tb, y)
    via_r = s_from_green(product_r_transform(ta, tb), y)
    diff = abs(via_s - via_r)
    if diff > tol:
        raise FreeconvError(
            f"S/R routes disagree at y = {y}: |{via_s} - {via_r}| = {diff:.3e}")
    return via_s

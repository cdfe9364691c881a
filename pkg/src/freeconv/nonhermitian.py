"""Non-hermitian spectra via 2x2 quaternionic Green's functions.

The product law couples two matrix-valued R maps through one-sided phase
rotations.  Solutions live on one of two branches: a holomorphic branch with
vanishing off-diagonal (outside the eigenvalue support, where the Green's
function is analytic) and a nonholomorphic branch carrying the eigenvector
correlator (inside the support).  Branch selection is done by a stability
analysis of the holomorphic solution rather than by watching a fixed point
collapse, which stays sharp arbitrarily close to the support edge.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from .core import (
    Complex2x2,
    QuaternionicGreen,
    invert,
    phase_split,
    qinv,
    qmul,
    rotate_left,
    rotate_right,
)
from .errors import (
    BranchUndecidedError,
    ConvergenceError,
    FreeconvError,
    GridError,
)
from .grids import GridSpec
from . import hermitian
from .hermitian import ScalarTransform

_COLLAPSE = 1e-8  # correlator at or below this means the holomorphic branch


# ---------------------------------------------------------------------------
# matrix R maps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixRMap:
    """Matrix-valued R transform acting on quaternionic Green's functions.

    apply_q is the structured fast path (a, b) -> (a', b') used by the
    solvers; apply embeds its result as a full 2x2 matrix.  apply_matrix, when
    available, extends the map to arbitrary 2x2 arguments as required by the
    left/right S-transform machinery.  meta carries the parameters of known
    families so closed-form density routes can recognize them.
    """

    name: str
    apply_q: Callable[[QuaternionicGreen], QuaternionicGreen]
    kappa1: complex
    apply_matrix: Optional[Callable[[Complex2x2], Complex2x2]] = None
    meta: Optional[dict] = None

    def apply(self, g: QuaternionicGreen) -> Complex2x2:
        return self.apply_q(g).embed()

    def diagonal_section(self) -> ScalarTransform:
        """Restriction to diagonal arguments, as a scalar R transform."""
        return ScalarTransform(
            name=f"{self.name}|diag",
            r_eval=lambda x: self.apply_q(QuaternionicGreen(x, 0.0)).a,
            kappa1=self.kappa1,
        )

    def b_coupling(self, a_value: complex) -> complex:
        """d(off-diagonal out)/d(off-diagonal in) at b = 0, diagonal a_value."""
        h = 1e-6
        tp = self.apply_q(QuaternionicGreen(a_value, +h)).b
        tm = self.apply_q(QuaternionicGreen(a_value, -h)).b
        return (tp - tm) / (2.0 * h)


def elliptic_rmap(sigma: float = 1.0, tau: float = 0.0, shift: complex = 0.0,
                  name: str = None) -> MatrixRMap:
    """Elliptic family: R(a, b) = (shift + tau sigma^2 a, sigma^2 b).

    tau = 0 is the rotationally invariant (Ginibre-type) case, tau = 1 the
    hermitian Gaussian, intermediate values interpolate the two.
    """
    s2 = float(sigma) ** 2
    t = float(tau)
    c = complex(shift)
    if not -1.0 <= t <= 1.0:
        raise FreeconvError(f"tau must lie in [-1, 1], got {t}")

    def apply_q(g: QuaternionicGreen) -> QuaternionicGreen:
        return QuaternionicGreen(c + t * s2 * g.a, s2 * g.b)

    def apply_matrix(m: Complex2x2) -> Complex2x2:
        return Complex2x2(c + t * s2 * m.q11, s2 * m.q12,
                          s2 * m.q21, c.conjugate() + t * s2 * m.q22)

    label = name or (f"elliptic(sigma={sigma}, tau={tau})"
                     + (f"+{shift}" if shift != 0 else ""))
    return MatrixRMap(name=label, apply_q=apply_q, kappa1=c,
                      apply_matrix=apply_matrix,
                      meta={"kind": "elliptic", "sigma": float(sigma),
                            "tau": t, "shift": c})


def ginibre_rmap(sigma: float = 1.0) -> MatrixRMap:
    return elliptic_rmap(sigma=sigma, tau=0.0, name=f"ginibre({sigma})")


def gue_rmap(sigma: float = 1.0) -> MatrixRMap:
    return elliptic_rmap(sigma=sigma, tau=1.0, name=f"gue({sigma})")


def constant_rmap(c: complex, name: str = None) -> MatrixRMap:
    """Deterministic matrix c * I: R is the constant diag(c, conj c)."""
    c = complex(c)

    def apply_q(g: QuaternionicGreen) -> QuaternionicGreen:
        return QuaternionicGreen(c, 0.0)

    def apply_matrix(m: Complex2x2) -> Complex2x2:
        return Complex2x2.diagonal(c, c.conjugate())

    return MatrixRMap(name=name or f"const({c})", apply_q=apply_q, kappa1=c,
                      apply_matrix=apply_matrix,
                      meta={"kind": "constant", "shift": c})


def shifted_rmap(base: MatrixRMap, shift: complex, name: str = None) -> MatrixRMap:
    """Add a deterministic shift * I to an existing map."""
    c = complex(shift)

    def apply_q(g: QuaternionicGreen) -> QuaternionicGreen:
        inner = base.apply_q(g)
        return QuaternionicGreen(c + inner.a, inner.b)

    apply_matrix = None
    if base.apply_matrix is not None:
        def apply_matrix(m: Complex2x2) -> Complex2x2:
            return Complex2x2.diagonal(c, c.conjugate()) + base.apply_matrix(m)

    meta = None
    if base.meta is not None and base.meta.get("kind") == "elliptic":
        meta = dict(base.meta)
        meta["shift"] = meta.get("shift", 0.0) + c
    return MatrixRMap(name=name or f"{base.name}+{shift}",
                      apply_q=apply_q, kappa1=base.kappa1 + c,
                      apply_matrix=apply_matrix, meta=meta)


# ---------------------------------------------------------------------------
# solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NonHermSolution:
    """One point solution of a single-matrix or product Green's system.

    correlator is |b|^2 for a single matrix and |b_A| |b_B| for a product;
    branch is "holomorphic" exactly when correlator <= 1e-8.  residual is the
    worst max-entry residual of the defining matrix equations, computed with
    full 2x2 algebra independent of the structured solver arithmetic.
    """

    z: complex
    gm: QuaternionicGreen
    ga: QuaternionicGreen
    gb: QuaternionicGreen
    correlator: float
    branch: str
    residual: float
    iterations: int = 0


def eigenvector_correlator(g: QuaternionicGreen) -> float:
    """Off-diagonal weight |b|^2 of a single resolvent block."""
    return abs(g.b) ** 2


# ---------------------------------------------------------------------------
# branch indicator: stability of the holomorphic solution
# ---------------------------------------------------------------------------


def _holomorphic_scalars(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex):
    """Holomorphic-branch diagonal data (g, s_a, s_b, aux g_a, g_b)."""
    ta = rmap_a.diagonal_section()
    tb = rmap_b.diagonal_section()
    pg = hermitian.multiply_r_system(ta, tb, z)
    ga_aux, gb_aux = hermitian._product_aux(ta, tb, pg.g)
    sa = ta.r_eval(gb_aux)
    sb = tb.r_eval(ga_aux)
    return pg.g, sa, sb, ga_aux, gb_aux


def branch_indicator(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex) -> float:
    """Spectral radius minus one of the off-diagonal stability matrix.

    Positive values mean the holomorphic product solution is unstable against
    off-diagonal perturbations, i.e. z lies inside the eigenvalue support;
    the zero level set is the support boundary.  The linearization of the
    coupled update around b_A = b_B = 0 is complex-linear with matrix

        [[|s_A|^2 |g|^2 L_B,  e^{i phi} L_A (g + |g|^2 conj(s_A s_B))],
         [e^{-i phi} L_B (conj(g) + |g|^2 s_A s_B),  |s_B|^2 |g|^2 L_A]]

    where s_X are the diagonal self-energies, L_X the off-diagonal couplings,
    and g the holomorphic Green's function of the product.
    """
    g, sa, sb, ga_aux, gb_aux = _holomorphic_scalars(rmap_a, rmap_b, z)
    la = rmap_a.b_coupling(gb_aux)
    lb = rmap_b.b_coupling(ga_aux)
    phase = z / abs(z)
    g2 = abs(g) ** 2
    t11 = abs(sa) ** 2 * g2 * lb
    t12 = phase * la * (g + g2 * (sa * sb).conjugate())
    t21 = lb * (g.conjugate() + g2 * sa * sb) / phase
    t22 = abs(sb) ** 2 * g2 * la
    half_tr = 0.5 * (t11 + t22)
    disc = cmath.sqrt(half_tr * half_tr - (t11 * t22 - t12 * t21))
    radius = max(abs(half_tr + disc), abs(half_tr - disc))
    return radius - 1.0


def _single_indicator(rmap: MatrixRMap, z: complex) -> float:
    """Same stability criterion for a single matrix: L |g|^2 - 1."""
    section = rmap.diagonal_section()
    g = hermitian.green_from_r(section, z).g
    coupling = rmap.b_coupling(g)
    return abs(coupling) * abs(g) ** 2 - 1.0


# ---------------------------------------------------------------------------
# single-matrix solver
# ---------------------------------------------------------------------------


def _single_residual(rmap: MatrixRMap, z: complex, g: QuaternionicGreen) -> float:
    zmat = Complex2x2.diagonal(z, z.conjugate())
    return (g.embed() - invert(zmat - rmap.apply(g))).norm_max()


def solve_single(rmap: MatrixRMap, z: complex, tol: float = 1e-12,
                 max_fp: int = 400) -> NonHermSolution:
    """Solve G = (Z - R(G))^{-1} for one matrix ensemble at one point.

    Chooses the branch by the stability of the holomorphic solution, then
    solves the chosen branch with a damped fixed point plus a least-squares
    Newton polish (the system has a one-parameter phase redundancy in b, so
    the Newton step is computed in the minimal-norm sense).
    """
    phase_split(z)  # reject the origin up front
    try:
        unstable = _single_indicator(rmap, z) > 0.0
    except (ConvergenceError, BranchUndecidedError):
        unstable = True

    if not unstable:
        section = rmap.diagonal_section()
        g = hermitian.green_from_r(section, z, tol).g
        q = QuaternionicGreen(g, 0.0)
        res = _single_residual(rmap, z, q)
        return NonHermSolution(z=z, gm=q, ga=q, gb=q,
                               correlator=eigenvector_correlator(q),
                               branch="holomorphic", residual=res)

    def fp_step(q: QuaternionicGreen) -> QuaternionicGreen:
        s = rmap.apply_q(q)
        return qinv(QuaternionicGreen(z - s.a, -s.b))

    q = QuaternionicGreen(0.0, 0.1)
    iterations = 0
    for iterations in range(1, max_fp + 1):
        nxt = fp_step(q)
        step = max(abs(nxt.a - q.a), abs(nxt.b - q.b))
        q = QuaternionicGreen(q.a + 0.5 * (nxt.a - q.a), q.b + 0.5 * (nxt.b - q.b))
        if step < 0.1 * tol:
            break

    q = _newton_polish_q(fp_step, q, tol)
    res = _single_residual(rmap, z, q)
    if res > max(tol * 10.0, 1e-10):
        raise ConvergenceError(f"single-matrix solve stalled at z = {z}", residual=res)
    corr = eigenvector_correlator(q)
    branch = "holomorphic" if corr <= _COLLAPSE else "nonholomorphic"
    return NonHermSolution(z=z, gm=q, ga=q, gb=q, correlator=corr,
                           branch=branch, residual=res, iterations=iterations)


def _newton_polish_q(fp_step, q: QuaternionicGreen, tol: float,
                     max_newton: int = 40) -> QuaternionicGreen:
    """Least-squares Newton for the fixed point of a map on one (a, b) pair."""

    def pack(p):
        return np.array([p.a.real, p.a.imag, p.b.real, p.b.imag])

    def unpack(x):
        return QuaternionicGreen(complex(x[0], x[1]), complex(x[2], x[3]))

    def fval(x):
        p = unpack(x)
        n = fp_step(p)
        return pack(p) - pack(n)

    x = pack(q)
    for _ in range(max_newton):
        f = fval(x)
        if np.max(np.abs(f)) < 0.05 * tol:
            break
        jac = np.empty((4, 4))
        h = 1e-7
        for k in range(4):
            xp = x.copy()
            xp[k] += h
            jac[:, k] = (fval(xp) - f) / h
        dx, *_ = np.linalg.lstsq(jac, f, rcond=None)
        x = x - dx
    return unpack(x)


# ---------------------------------------------------------------------------
# product solver
# ---------------------------------------------------------------------------


def _product_step(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex, psi: float,
                  qa: QuaternionicGreen, qb: QuaternionicGreen):
    """One sweep of the coupled product system; returns (ga', gb', gm)."""
    u = cmath.exp(1j * psi)
    sa = rmap_a.apply_q(qb)
    sb = rmap_b.apply_q(qa)
    sal = QuaternionicGreen(sa.a, sa.b * u)     # [Sigma_A]^L
    sbr = QuaternionicGreen(sb.a, sb.b / u)     # [Sigma_B]^R
    sm = qmul(sal, sbr)
    gm = qinv(QuaternionicGreen(z - sm.a, -sm.b))
    ga_raw = qmul(gm, sal)
    gb_raw = qmul(sbr, gm)
    ga = QuaternionicGreen(ga_raw.a, ga_raw.b * u)   # [G_M Sigma_A^L]^L
    gb = QuaternionicGreen(gb_raw.a, gb_raw.b / u)   # [Sigma_B^R G_M]^R
    return ga, gb, gm


def _product_residual(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex, psi: float,
                      qa: QuaternionicGreen, qb: QuaternionicGreen,
                      gm: QuaternionicGreen) -> float:
    """Defining-equation residuals recomputed with dense 2x2 algebra."""
    sal = rotate_left(rmap_a.apply(qb), psi)
    sbr = rotate_right(rmap_b.apply(qa), psi)
    sm = sal @ sbr
    zmat = Complex2x2.diagonal(z, z.conjugate())
    r1 = (gm.embed() - invert(zmat - sm)).norm_max()
    r2 = (qa.embed() - rotate_left(gm.embed() @ sal, psi)).norm_max()
    r3 = (qb.embed() - rotate_right(sbr @ gm.embed(), psi)).norm_max()
    return max(r1, r2, r3)


def _holomorphic_product(rmap_a, rmap_b, z, tol):
    ta = rmap_a.diagonal_section()
    tb = rmap_b.diagonal_section()
    pg = hermitian.multiply_r_system(ta, tb, z, tol)
    gm = QuaternionicGreen(pg.g, 0.0)
    qa = QuaternionicGreen(pg.g_a, 0.0)
    qb = QuaternionicGreen(pg.g_b, 0.0)
    psi = phase_split(z).psi
    res = _product_residual(rmap_a, rmap_b, z, psi, qa, qb, gm)
    return NonHermSolution(z=z, gm=gm, ga=qa, gb=qb, correlator=0.0,
                           branch="holomorphic", residual=res)


def solve_product(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex,
                  tol: float = 1e-12, max_fp: int = 400,
                  symmetric: bool = False, branch: str = None) -> NonHermSolution:
    """Solve the free-product Green's system for M = A B at one point.

    The coupled unknowns (G_M, G_A, G_B) satisfy

        G_M = (Z - [R_A(G_B)]^L [R_B(G_A)]^R)^{-1},
        G_A = [G_M [R_A(G_B)]^L]^L,   G_B = [[R_B(G_A)]^R G_M]^R,

    with the one-sided rotations taken at half the phase of z.  The branch is
    chosen by branch_indicator; inside the support a damped fixed point plus
    least-squares Newton refines the nonholomorphic solution.  symmetric=True
    ties the two auxiliary blocks together (valid only when both maps are
    identical); the result is still validated against the untied equations.
    branch ("nonholomorphic" or "holomorphic") skips the indicator probe when
    the caller already classified z, e.g. for the arms of a tight stencil
    classified once at its center; a wrong "nonholomorphic" hint is caught by
    the collapse detector, which falls back to the holomorphic branch.
    """
    pp = phase_split(z)
    psi = pp.psi
    if branch is not None:
        inside = branch == "nonholomorphic"
    else:
        try:
            inside = branch_indicator(rmap_a, rmap_b, z) > 0.0
        except (ConvergenceError, BranchUndecidedError):
            # the holomorphic scalar branch itself is lost here, which only
            # happens deep inside the support; let the full iteration decide
            inside = True

    if not inside:
        return _holomorphic_product(rmap_a, rmap_b, z, tol)

    qa = QuaternionicGreen(0.0, 0.1)
    qb = QuaternionicGreen(0.0, 0.1)
    iterations = 0
    collapsed = False
    for iterations in range(1, max_fp + 1):
        na, nb, _ = _product_step(rmap_a, rmap_b, z, psi, qa, qb)
        if symmetric:
            na = nb = QuaternionicGreen(0.5 * (na.a + nb.a), 0.5 * (na.b + nb.b))
        step = max(abs(na.a - qa.a), abs(na.b - qa.b),
                   abs(nb.a - qb.a), abs(nb.b - qb.b))
        qa = QuaternionicGreen(qa.a + 0.5 * (na.a - qa.a), qa.b + 0.5 * (na.b - qa.b))
        qb = QuaternionicGreen(qb.a + 0.5 * (nb.a - qb.a), qb.b + 0.5 * (nb.b - qb.b))
        if abs(qa.b) < 1e-9 and abs(qb.b) < 1e-9 and iterations > 20:
            collapsed = True
            break
        if step < 0.1 * tol:
            break

    if collapsed:
        # the iteration sank to the holomorphic branch; either z is outside
        # after all (indicator failed) or marginally inside, where the two
        # branches coincide to solver precision
        return _holomorphic_product(rmap_a, rmap_b, z, tol)

    qa, qb = _newton_polish_pair(rmap_a, rmap_b, z, psi, qa, qb, tol)
    _, _, gm = _product_step(rmap_a, rmap_b, z, psi, qa, qb)
    corr = abs(qa.b) * abs(qb.b)
    if corr <= _COLLAPSE:
        # Newton landed on the holomorphic root
        return _holomorphic_product(rmap_a, rmap_b, z, tol)
    res = _product_residual(rmap_a, rmap_b, z, psi, qa, qb, gm)
    if res > max(10.0 * tol, 1e-10):
        raise ConvergenceError(f"product solve stalled at z = {z}", residual=res)
    return NonHermSolution(z=z, gm=gm, ga=qa, gb=qb, correlator=corr,
                           branch="nonholomorphic", residual=res,
                           iterations=iterations)


def _newton_polish_pair(rmap_a, rmap_b, z, psi, qa, qb, tol, max_newton=40):
    """Least-squares Newton on the 8 real unknowns of the product system."""

    def pack(pa, pb):
        return np.array([pa.a.real, pa.a.imag, pa.b.real, pa.b.imag,
                         pb.a.real, pb.a.imag, pb.b.real, pb.b.imag])

    def unpack(x):
        return (QuaternionicGreen(complex(x[0], x[1]), complex(x[2], x[3])),
                QuaternionicGreen(complex(x[4], x[5]), complex(x[6], x[7])))

    def fval(x):
        pa, pb = unpack(x)
        na, nb, _ = _product_step(rmap_a, rmap_b, z, psi, pa, pb)
        return x - pack(na, nb)

    x = pack(qa, qb)
    for _ in range(max_newton):
        f = fval(x)
        if np.max(np.abs(f)) < 0.05 * tol:
            break
        jac = np.empty((8, 8))
        h = 1e-7
        for k in range(8):
            xp = x.copy()
            xp[k] += h
            jac[:, k] = (fval(xp) - f) / h
        dx, *_ = np.linalg.lstsq(jac, f, rcond=None)
        x = x - dx
    return unpack(x)


# ---------------------------------------------------------------------------
# support boundary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryResult:
    """Support boundary sampled along rays from the origin.

    points holds (r, phi) pairs for rays where an outermost branch transition
    was bracketed and bisected; empty_rays lists angles along which no inside
    point was found (empty or unbounded direction).
    """

    points: tuple
    empty_rays: tuple


def boundary_curve(rmap_a: MatrixRMap, rmap_b: MatrixRMap,
                   angular_samples: int = 64, radial_tolerance: float = 1e-5,
                   r_min: float = 1e-4, r_max: float = None,
                   angles=None) -> BoundaryResult:
    """Locate the support boundary of A B by radial bisection per angle.

    The inside/outside predicate is the sign of branch_indicator, which
    crosses zero transversally at the boundary, so bisection converges at
    full speed with no critical slowing near the edge.  The outermost
    crossing is returned on rays that enter and leave the support more than
    once.
    """
    if angles is None:
        if angular_samples < 8:
            raise FreeconvError("need at least 8 angular samples")
        angles = [-math.pi + (k + 0.5) * 2.0 * math.pi / angular_samples
                  for k in range(angular_samples)]
    else:
        angles = [float(p) for p in angles]
    expandable = r_max is None  # only the internal estimate may be enlarged
    if r_max is None:
        r_max = 1.5 * _support_scale(rmap_a) * _support_scale(rmap_b) + 1.0

    def indicator(r: float, phi: float) -> float:
        try:
            return branch_indicator(rmap_a, rmap_b, cmath.rect(r, phi))
        except (ConvergenceError, BranchUndecidedError):
            return 1.0  # scalar branch loss only happens inside

    points = []
    empty = []
    for phi in angles:
        r_hi = r_max
        for _ in range(3 if expandable else 1):
            if indicator(r_hi, phi) <= 0.0:
                break
            r_hi *= 2.0
        else:
            empty.append(phi)  # support reaches past r_max along this ray
            continue
        # walk inward to bracket the outermost crossing
        n_scan = 24
        bracket = None
        r_prev = r_hi
        for k in range(1, n_scan + 1):
            r = r_hi + (r_min - r_hi) * k / n_scan
            if indicator(r, phi) > 0.0:
                bracket = (r, r_prev)
                break
            r_prev = r
        if bracket is None:
            empty.append(phi)
            continue
        lo, hi = bracket  # indicator(lo) > 0 >= indicator(hi)
        while hi - lo > radial_tolerance:
            mid = 0.5 * (lo + hi)
            if indicator(mid, phi) > 0.0:
                lo = mid
            else:
                hi = mid
        points.append((0.5 * (lo + hi), phi))
    return BoundaryResult(points=tuple(points), empty_rays=tuple(empty))


def _support_scale(rmap: MatrixRMap) -> float:
    meta = rmap.meta or {}
    sigma = float(meta.get("sigma", 1.0)) if meta.get("kind") == "elliptic" else 1.0
    return abs(rmap.kappa1) + 2.0 * sigma


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityField:
    """Eigenvalue density (and Green's data) sampled on a grid.

    For analytic routes g11 holds the 11 entry of G_M at every node, rot the
    per-node finite-difference curl of the Green's vector field, and
    rot_residual the worst |rot| over nodes with full central stencils
    (identically zero for closed forms).  Empirical histograms reuse the type
    with g11/rot/rot_residual None.
    """

    grid: GridSpec
    rho: np.ndarray
    g11: Optional[np.ndarray] = None
    rot: Optional[np.ndarray] = None
    rot_residual: Optional[float] = None
    route: str = "generic"
    holes: int = 0
    counts: Optional[np.ndarray] = None


class LimaconPoint(NamedTuple):
    C: float
    D: float
    G: complex
    rho: float


def limacon_reference(r: float, phi: float) -> LimaconPoint:
    """Closed-form data for the product of two unit-shift, unit-variance
    rotationally invariant ensembles, in polar coordinates.

    Inside the cardioid-like region r <= 1 + 2 cos(phi) the auxiliary scale u
    solves u (1 + u) = 2 r (1 + cos phi) and

        C = u - r,  D = 1 + u,  G = (u e^{-i phi} - 1) / (1 + u),
        rho = (1/pi) [ 2 (1 + cos phi) / ((1 + 2u)(1 + u)^2) + u / (2 r (1 + u)) ].

    The boundary itself is reported from the inside branch (C -> 0 there).
    The limit at r = 0 is direction dependent, 3 (1 + cos phi) / pi, because
    the origin is the cusp of the support boundary; the value reported AT
    r = 0 is the supremum 6/pi (the phi = 0 limit), matching the convention
    that the density maximum sits at the origin.
    Outside, the trivial branch G = 1/(z - 1) with rho = 0 applies.
    """
    r = float(r)
    phi = float(phi)
    if r < 0.0:
        raise FreeconvError("radius must be nonnegative")
    cos_phi = math.cos(phi)
    if r == 0.0:
        return LimaconPoint(C=0.0, D=1.0, G=complex(-1.0, 0.0),
                            rho=6.0 / math.pi)
    if r <= 1.0 + 2.0 * cos_phi:
        u = 0.5 * (math.sqrt(1.0 + 8.0 * r * (1.0 + cos_phi)) - 1.0)
        d = 1.0 + u
        c = u - r
        g = (u * cmath.exp(-1j * phi) - 1.0) / d
        rho = (2.0 * (1.0 + cos_phi) / ((1.0 + 2.0 * u) * d * d)
               + u / (2.0 * r * d)) / math.pi
        return LimaconPoint(C=c, D=d, G=g, rho=rho)
    z = cmath.rect(r, phi)
    d = abs(z - 1.0) ** 2
    return LimaconPoint(C=0.0, D=d, G=1.0 / (z - 1.0), rho=0.0)


def _registered_route(rmap_a: MatrixRMap, rmap_b: MatrixRMap):
    """Identify (route, params) for pairs with closed-form densities."""
    ma, mb = rmap_a.meta, rmap_b.meta
    if not ma or not mb or ma.get("kind") != "elliptic" or mb.get("kind") != "elliptic":
        return None
    if ma["shift"] == 0 and mb["shift"] == 0:
        return ("circular", ma["sigma"] * mb["sigma"])
    if all(m["shift"] == 1 and m["tau"] == 0.0 and m["sigma"] == 1.0
           for m in (ma, mb)):
        return ("limacon", None)
    return None


def _circular_point(s: float, z: complex):
    """g11 and rho for the centered product with support radius s."""
    r = abs(z)
    if r <= s:
        return z.conjugate() / (r * s), 1.0 / (2.0 * math.pi * s * r)
    return 1.0 / z, 0.0


class PointDensity(NamedTuple):
    rho: float
    rot: float


def density_at(rmap_a: MatrixRMap, rmap_b: MatrixRMap, z: complex,
               step: float = None, tol: float = 1e-12) -> PointDensity:
    """Pointwise density of M = A B from the divergence of the Green's field.

    Uses fourth-order central differences of G = (Re g11, -Im g11) on a local
    cross stencil; rho = div G / (2 pi) and rot = curl G is returned as a
    consistency diagnostic (it vanishes for exact fields).  The stencil must
    not straddle z = 0; pick step accordingly near the origin.  The whole
    stencil reuses the branch decided at the center, so the derivative is
    one-sided rather than mixed when z sits close to the support boundary.
    """
    if step is None:
        step = 1e-4 * max(1.0, abs(z))
        if abs(z) < 4.0 * step:
            step = abs(z) / 4.0  # keep the stencil clear of the origin
    h = float(step)
    side = solve_product(rmap_a, rmap_b, z, tol=tol).branch

    def g_of(w: complex) -> complex:
        return solve_product(rmap_a, rmap_b, w, tol=tol, branch=side).gm.a

    def d4(values):
        m2, m1, p1, p2 = values
        return (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h)

    gx = [g_of(z + dx) for dx in (-2 * h, -h, h, 2 * h)]
    gy = [g_of(z + 1j * dy) for dy in (-2 * h, -h, h, 2 * h)]
    dgx_dx = d4([v.real for v in gx])
    dgy_dy = d4([-v.imag for v in gy])
    dgy_dx = d4([-v.imag for v in gx])
    dgx_dy = d4([v.real for v in gy])
    rho = (dgx_dx + dgy_dy) / (2.0 * math.pi)
    rot = dgy_dx - dgx_dy
    return PointDensity(rho=rho, rot=rot)


def density_field(rmap_a: MatrixRMap, rmap_b: MatrixRMap, grid: GridSpec,
                  tol: float = 1e-12, force_generic: bool = False) -> DensityField:
    """Eigenvalue density of A B on a full grid.

    Registered pairs (centered elliptic x centered elliptic; unit-shift
    Ginibre squares) evaluate their closed forms.  Everything else solves the
    product system at every node and applies the divergence law with central
    finite differences (fourth order where the stencil allows, second order
    otherwise, one-sided at edges).  Nodes where the solver fails are holes;
    more than 5% holes aborts with GridError.
    """
    points = grid.points()
    if grid.contains_origin():
        raise GridError("grid contains z = 0; offset the ranges to avoid the origin")
    route = None if force_generic else _registered_route(rmap_a, rmap_b)

    if route is not None:
        kind, param = route
        g11 = np.empty(points.shape, dtype=complex)
        rho = np.empty(points.shape, dtype=float)
        it = np.nditer(points, flags=["multi_index"])
        for zv in it:
            z = complex(zv)
            if kind == "circular":
                g, d = _circular_point(param, z)
            else:
                ref = limacon_reference(abs(z), cmath.phase(z))
                g, d = ref.G, ref.rho
            g11[it.multi_index] = g
            rho[it.multi_index] = d
        return DensityField(grid=grid, rho=rho, g11=g11,
                            rot=np.zeros(points.shape), rot_residual=0.0,
                            route=f"closed-form:{kind}")

    g11 = np.full(points.shape, np.nan + 0j, dtype=complex)
    holes = 0
    it = np.nditer(points, flags=["multi_index"])
    for zv in it:
        z = complex(zv)
        try:
            g11[it.multi_index] = solve_product(rmap_a, rmap_b, z, tol=tol).gm.a
        except (ConvergenceError, BranchUndecidedError, FreeconvError):
            holes += 1
    if holes > 0.05 * points.size:
        raise GridError(f"{holes} of {points.size} grid nodes failed to solve")

    rho, rot = _divergence_rho(grid, g11)
    rot_core = rot[1:-1, 1:-1]  # edge rows use one-sided stencils; skip them
    finite_rot = rot_core[np.isfinite(rot_core)]
    rot_residual = float(np.max(np.abs(finite_rot))) if finite_rot.size else math.inf
    return DensityField(grid=grid, rho=rho, g11=g11, rot=rot,
                        rot_residual=rot_residual, route="generic", holes=holes)


def _axis_derivative(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """d/du along one grid axis: 4th-order central in the deep interior,
    2nd-order central one node from the edge, one-sided 2nd order at edges."""
    v = np.moveaxis(values, axis, 0)
    n = v.shape[0]
    out = np.full_like(v, np.nan, dtype=float)
    if n >= 5:
        out[2:-2] = (v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]) / (12.0 * h)
    # fill the remaining interior (and 4th-order slots broken by holes)
    # with 2nd-order central values
    out[1:-1] = np.where(np.isnan(out[1:-1]),
                         (v[2:] - v[:-2]) / (2.0 * h), out[1:-1])
    out[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    out[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    return np.moveaxis(out, 0, axis)


def _divergence_rho(grid: GridSpec, g11: np.ndarray):
    """Gauss-law density and curl diagnostic from g11 on the grid."""
    gx = np.real(g11)
    gy = -np.imag(g11)
    h0, h1 = grid.steps()
    if grid.kind == "cartesian":
        dgx_dx = _axis_derivative(gx, h0, 0)
        dgx_dy = _axis_derivative(gx, h1, 1)
        dgy_dx = _axis_derivative(gy, h0, 0)
        dgy_dy = _axis_derivative(gy, h1, 1)
    else:
        r_ax, phi_ax = grid.axes()
        r = r_ax[:, None]
        cos_p = np.cos(phi_ax)[None, :]
        sin_p = np.sin(phi_ax)[None, :]
        gx_r = _axis_derivative(gx, h0, 0)
        gx_p = _axis_derivative(gx, h1, 1)
        gy_r = _axis_derivative(gy, h0, 0)
        gy_p = _axis_derivative(gy, h1, 1)
        dgx_dx = cos_p * gx_r - sin_p / r * gx_p
        dgx_dy = sin_p * gx_r + cos_p / r * gx_p
        dgy_dx = cos_p * gy_r - sin_p / r * gy_p
        dgy_dy = sin_p * gy_r + cos_p / r * gy_p
    rho = (dgx_dx + dgy_dy) / (2.0 * math.pi)
    rot = dgy_dx - dgx_dy
    return rho, rot


# ---------------------------------------------------------------------------
# identity report: left/right S transforms and final residuals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityReport:
    """Deferred consistency checks evaluated at one converged solution.

    gm/ga/gb residuals are the defining equations recomputed from scratch;
    s_status is "converged", "S undefined" (a centered factor), or
    "non-convergent"; factorization_residual is the max-entry defect of
    R_M^{-1} = S_B^{(R)} S_A^{(L)} when both one-sided S transforms exist.
    commutator_norm measures [Sigma_A^L, Sigma_B^R]; when it vanishes the
    factorization collapses to the commuting (scalar-like) identity.
    """

    gm_residual: float
    ga_residual: float
    gb_residual: float
    s_status: str
    s_left: Optional[Complex2x2]
    s_right: Optional[Complex2x2]
    factorization_residual: Optional[float]
    commutator_norm: float


def _matrix_fixed_point(step, seed: Complex2x2, tol: float, max_iter: int = 600):
    """Damped fixed point handed off to a least-squares Newton polish.

    The damping carries the iterate into the contraction basin; Newton takes
    over once the update is small, because the plain iteration can contract
    arbitrarily slowly where the support pinches (multiplier close to one).
    """
    x = seed
    for _ in range(max_iter):
        nxt = step(x)
        delta = (nxt - x).norm_max()
        x = x + (nxt - x).scale(0.5)
        if delta < 1e-6:
            break

    def pack(m: Complex2x2):
        return np.array([m.q11.real, m.q11.imag, m.q12.real, m.q12.imag,
                         m.q21.real, m.q21.imag, m.q22.real, m.q22.imag])

    def unpack(v) -> Complex2x2:
        return Complex2x2(complex(v[0], v[1]), complex(v[2], v[3]),
                          complex(v[4], v[5]), complex(v[6], v[7]))

    def fval(v):
        m = unpack(v)
        return v - pack(step(m))

    vec = pack(x)
    for _ in range(40):
        f = fval(vec)
        if np.max(np.abs(f)) < 0.05 * tol:
            break
        jac = np.empty((8, 8))
        h = 1e-7
        for k in range(8):
            vp = vec.copy()
            vp[k] += h
            jac[:, k] = (fval(vp) - f) / h
        dx, *_ = np.linalg.lstsq(jac, f, rcond=None)
        vec = vec - dx
    x = unpack(vec)
    delta = (step(x) - x).norm_max()
    if delta < tol:
        return x
    raise ConvergenceError("matrix fixed point stalled", residual=delta)


def residual_identities(sol: NonHermSolution, rmap_a: MatrixRMap,
                        rmap_b: MatrixRMap, tol: float = 1e-10) -> IdentityReport:
    """Recompute defining residuals and the one-sided S factorization.

    The left S transform of A solves X = (R_A^L([X Y_L]^R))^{-1} with
    Y_L = R_M G_M, the right S transform of B solves
    X = (R_B^R([Y_R X]^L))^{-1} with Y_R = G_M R_M, and together they must
    reproduce R_M^{-1} = S_B^{(R)} S_A^{(L)}.  Requires full-matrix R maps;
    centered factors (kappa1 = 0) have no S transform and are reported as
    such while the residual checks still run.
    """
    psi = phase_split(sol.z).psi
    sal = rotate_left(rmap_a.apply(sol.gb), psi)
    sbr = rotate_right(rmap_b.apply(sol.ga), psi)
    rm = sal @ sbr
    zmat = Complex2x2.diagonal(sol.z, sol.z.conjugate())
    gm = sol.gm.embed()
    gm_res = (gm - invert(zmat - rm)).norm_max()
    ga_res = (sol.ga.embed() - rotate_left(gm @ sal, psi)).norm_max()
    gb_res = (sol.gb.embed() - rotate_right(sbr @ gm, psi)).norm_max()
    commutator = (sal @ sbr - sbr @ sal).norm_max()

    if rmap_a.kappa1 == 0 or rmap_b.kappa1 == 0:
        return IdentityReport(gm_residual=gm_res, ga_residual=ga_res,
                              gb_residual=gb_res, s_status="S undefined",
                              s_left=None, s_right=None,
                              factorization_residual=None,
                              commutator_norm=commutator)
    if rmap_a.apply_matrix is None or rmap_b.apply_matrix is None:
        raise FreeconvError(
            "left/right S transforms need full-matrix R maps (apply_matrix)")

    y_left = rm @ gm
    y_right = gm @ rm

    def step_left(x: Complex2x2) -> Complex2x2:
        inner = rotate_right(x @ y_left, psi)
        return invert(rotate_left(rmap_a.apply_matrix(inner), psi))

    def step_right(x: Complex2x2) -> Complex2x2:
        inner = rotate_left(y_right @ x, psi)
        return invert(rotate_right(rmap_b.apply_matrix(inner), psi))

    seed_a = Complex2x2.identity().scale(1.0 / rmap_a.kappa1)
    seed_b = Complex2x2.identity().scale(1.0 / rmap_b.kappa1)
    try:
        s_left = _matrix_fixed_point(step_left, seed_a, tol)
        s_right = _matrix_fixed_point(step_right, seed_b, tol)
    except ConvergenceError:
        return IdentityReport(gm_residual=gm_res, ga_residual=ga_res,
                              gb_residual=gb_res, s_status="non-convergent",
                              s_left=None, s_right=None,
                              factorization_residual=None,
                              commutator_norm=commutator)
    fact = (invert(rm) - s_right @ s_left).norm_max()
    return IdentityReport(gm_residual=gm_res, ga_residual=ga_res,
                          gb_residual=gb_res, s_status="converged",
                          s_left=s_left, s_right=s_right,
                          factorization_residual=fact,
                          commutator_norm=commutator)

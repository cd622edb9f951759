"""Second-order IVPs with a movable ``xdd = lam*xd^2/x`` singularity at t=0.

Problems handled here have the form

    x''(t) = lam * x'(t)^2 / x(t) + g(t, x, x'),    x(0) = x'(0) = 0,

with 0 < |lam| < 3/8 and g(0,0,0) != 0.  Classical steppers cannot start at
t=0 because the first term is 0/0 there (the solution leaves the origin like
a parabola, so x'^2/x stays finite).  The strategy:

1. build a small analytic seed on [-tau, tau] by Picard iteration of

       F(x)(t) = int_0^t (t - s) * (lam*x'^2/x + g)(s) ds,

   run in a band of relative half-width eps around the osculating parabola
   x0(t) = xdd0*t^2/2, with xdd0 = g(0,0,0)/(1-2*lam).  The iteration is a
   contraction once eps and tau are small enough; both are shrunk by halving
   until sampled bounds certify a contraction factor rho <= rho_target and
   the band maps into itself;
2. hand the endpoint state to a high-order classical stepper (DOP853) for
   the rest of the interval;
3. rebuild the trajectory as quintic-Hermite segments between the accepted
   integrator steps so evaluation needs no live integrator state.

The same machinery integrates the linearized (variational) equation

    y'' = 4*lam*(t*y' - y)/t^2 + alpha(t)*y/t + beta(t)*y' + sigma(t)

with y(0) = 0 and prescribed y'(0); the coefficient 4*lam*(t*y'-y)/t^2 is
what the lam*x'^2/x term contributes after linearization along a seed-built
solution.  Indicial roots at t=0 are 1 and 4*lam; for lam in (-1/2, 0) the
second mode decays when integrating outward, so a short quadratic Taylor
start is stable.
"""

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy.integrate import solve_ivp

from .errors import BlowUp, ContractionFailure, DomainError

# cap on the accepted-step spacing used for Hermite resegmentation
H_MAX = 5.0e-3
# Chebyshev-Lobatto points used for the seed (even count: no node at t=0)
N_CHEB = 48
RHO_TARGET_FLOOR = 0.9
PICARD_MAX_ITER = 200
_DOMAIN_SLACK = 1e-11


class SingularIVP:
    """Problem definition for x'' = lam*x'^2/x + g(t, x, x'), x(0)=x'(0)=0.

    g, g_x, g_xdot are callables of (t, x, xdot); g_origin is g(0,0,0).
    The partials are only used to size the seed interval, so sampled
    accuracy is enough.
    """

    def __init__(self, lam, g, g_x, g_xdot, g_origin):
        lam = float(lam)
        if not 0.0 < abs(lam) < 0.375:
            raise DomainError(f"need 0 < |lam| < 3/8, got lam={lam}")
        g_origin = float(g_origin)
        if g_origin == 0.0:
            raise DomainError("g(0,0,0) must be nonzero (origin acceleration degenerates)")
        self.lam = lam
        self.g = g
        self.g_x = g_x
        self.g_xdot = g_xdot
        self.g_origin = g_origin


def accel_at_origin(ivp):
    """Initial curvature xdd0 = g(0,0,0) / (1 - 2*lam)."""
    return ivp.g_origin / (1.0 - 2.0 * ivp.lam)


def _call_vec(fn, t, x, xd):
    """Call fn on arrays, falling back to a python loop for scalar-only fns."""
    try:
        out = fn(t, x, xd)
        out = np.asarray(out, dtype=float)
        if out.shape != np.shape(t):
            raise ValueError
        return out
    except (TypeError, ValueError):
        return np.array([fn(ti, xi, di) for ti, xi, di in zip(np.atleast_1d(t), np.atleast_1d(x), np.atleast_1d(xd))])


# ---------------------------------------------------------------------------
# dense solution container
# ---------------------------------------------------------------------------

def _hermite5_coeffs(h, x0, xd0, xdd0, x1, xd1, xdd1):
    """Quintic matching value/slope/curvature at both ends, in s=(t-t0)/h."""
    m0 = xd0 * h
    m1 = xd1 * h
    k0 = xdd0 * h * h
    k1 = xdd1 * h * h
    d = x1 - x0
    c3 = 10.0 * d - 6.0 * m0 - 4.0 * m1 - 1.5 * k0 + 0.5 * k1
    c4 = -15.0 * d + 8.0 * m0 + 7.0 * m1 + 1.5 * k0 - k1
    c5 = 6.0 * d - 3.0 * (m0 + m1) - 0.5 * (k0 - k1)
    return np.array([x0, m0, 0.5 * k0, c3, c4, c5])


class _Hermite5Segment:
    """Quintic Hermite piece on [t0, t0+h] (h may be negative)."""

    __slots__ = ("t0", "h", "c")

    def __init__(self, t0, t1, x0, xd0, xdd0, x1, xd1, xdd1):
        self.t0 = float(t0)
        self.h = float(t1 - t0)
        self.c = _hermite5_coeffs(self.h, x0, xd0, xdd0, x1, xd1, xdd1)

    def eval(self, t):
        s = (np.asarray(t, float) - self.t0) / self.h
        c = self.c
        x = ((((c[5] * s + c[4]) * s + c[3]) * s + c[2]) * s + c[1]) * s + c[0]
        xd = (((5 * c[5] * s + 4 * c[4]) * s + 3 * c[3]) * s + 2 * c[2]) * s + c[1]
        xdd = ((20 * c[5] * s + 12 * c[4]) * s + 6 * c[3]) * s + 2 * c[2]
        return x, xd / self.h, xdd / (self.h * self.h)

    def third(self, t):
        s = (np.asarray(t, float) - self.t0) / self.h
        c = self.c
        return ((60 * c[5] * s + 24 * c[4]) * s + 6 * c[3]) / self.h ** 3


class _ChebSegment:
    """Chebyshev series piece: coefficients live on s=(t-mid)/half in [-1,1].

    Stores series for x, x', x'' separately (the latter two are exact
    integrals/derivatives of the Picard fixed point).
    """

    __slots__ = ("mid", "half", "c0", "c1", "c2", "c3")

    def __init__(self, mid, half, c0, c1, c2):
        self.mid = float(mid)
        self.half = float(half)
        self.c0 = c0
        self.c1 = c1
        self.c2 = c2
        self.c3 = _cheb.chebder(c2) / self.half

    def eval(self, t):
        s = (np.asarray(t, float) - self.mid) / self.half
        return _cheb.chebval(s, self.c0), _cheb.chebval(s, self.c1), _cheb.chebval(s, self.c2)

    def third(self, t):
        s = (np.asarray(t, float) - self.mid) / self.half
        return _cheb.chebval(s, self.c3)


class DenseSolution:
    """Piecewise-analytic solution: sorted breakpoints + one segment per gap.

    Evaluation outside [breakpoints[0], breakpoints[-1]] raises DomainError.
    `info` carries construction metadata (seed half-width, Picard diff
    history, ...) so convergence claims stay checkable after the fact.
    """

    def __init__(self, breakpoints, segments, info=None):
        bp = np.asarray(breakpoints, float)
        if bp.ndim != 1 or bp.size != len(segments) + 1 or np.any(np.diff(bp) <= 0):
            raise DomainError("breakpoints must be strictly increasing, one segment per gap")
        self.breakpoints = bp
        self.segments = list(segments)
        self.domain = (float(bp[0]), float(bp[-1]))
        self.info = dict(info) if info else {}

    def _indices(self, t):
        lo, hi = self.domain
        slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
        t = np.asarray(t, float)
        if np.any(t < lo - slack) or np.any(t > hi + slack):
            raise DomainError(f"evaluation at t outside [{lo}, {hi}]")
        tc = np.clip(t, lo, hi)
        idx = np.searchsorted(self.breakpoints, tc, side="right") - 1
        return tc, np.clip(idx, 0, len(self.segments) - 1)

    def eval(self, t):
        scalar = np.ndim(t) == 0
        tc, idx = self._indices(t)
        tc = np.atleast_1d(tc)
        idx = np.atleast_1d(idx)
        x = np.empty_like(tc)
        xd = np.empty_like(tc)
        xdd = np.empty_like(tc)
        for k in np.unique(idx):
            m = idx == k
            x[m], xd[m], xdd[m] = self.segments[k].eval(tc[m])
        if scalar:
            return float(x[0]), float(xd[0]), float(xdd[0])
        return x, xd, xdd

    def __call__(self, t):
        return self.eval(t)[0]

    def derivative(self, t):
        return self.eval(t)[1]

    def second(self, t):
        return self.eval(t)[2]

    def third(self, t):
        scalar = np.ndim(t) == 0
        tc, idx = self._indices(t)
        tc = np.atleast_1d(tc)
        idx = np.atleast_1d(idx)
        out = np.empty_like(tc)
        for k in np.unique(idx):
            m = idx == k
            out[m] = self.segments[k].third(tc[m])
        return float(out[0]) if scalar else out

    def to_samples(self, n):
        """(t, x, xdot) on n uniform points across the domain."""
        t = np.linspace(self.domain[0], self.domain[1], int(n))
        x, xd, _ = self.eval(t)
        return t, x, xd


class MappedSolution(DenseSolution):
    """Affine re-parameterization of a base solution.

    value(q) = base(q + offset) + add0 + add1*q, so slope(q) = base' + add1.
    Used to present the arc computed in movable-frame coordinates
    (x = value - q, t = q - q_right) as the profile itself.
    """

    def __init__(self, base, offset, add0=0.0, add1=0.0):
        self.base = base
        self.offset = float(offset)
        self.add0 = float(add0)
        self.add1 = float(add1)
        self.breakpoints = base.breakpoints - self.offset
        self.segments = base.segments
        self.domain = (float(self.breakpoints[0]), float(self.breakpoints[-1]))
        self.info = base.info

    def eval(self, q):
        scalar = np.ndim(q) == 0
        qa = np.atleast_1d(np.asarray(q, float))
        lo, hi = self.domain
        slack = _DOMAIN_SLACK * max(1.0, abs(lo), abs(hi))
        if np.any(qa < lo - slack) or np.any(qa > hi + slack):
            raise DomainError(f"evaluation at q outside [{lo}, {hi}]")
        qa = np.clip(qa, lo, hi)
        x, xd, xdd = self.base.eval(qa + self.offset)
        x = x + self.add0 + self.add1 * qa
        xd = xd + self.add1
        if scalar:
            return float(x[0]), float(xd[0]), float(xdd[0])
        return x, xd, xdd

    def third(self, q):
        return self.base.third(np.asarray(q, float) + self.offset)


# ---------------------------------------------------------------------------
# Picard seed
# ---------------------------------------------------------------------------

def _band_norms(ivp, tau, eps, xdd0):
    """Sampled sup of |g_x|, |g_xdot|, |g_t| over the seed band."""
    tt = tau * np.array([-1.0, -0.75, -0.5, -0.25, -0.05, 0.0, 0.05, 0.25, 0.5, 0.75, 1.0])
    scales = np.array([1.0 - eps, 1.0, 1.0 + eps])
    gx = gxd = gt = 0.0
    ht = 1e-6 * max(tau, 1e-3)
    for th_x in scales:
        for th_d in scales:
            x = 0.5 * xdd0 * tt * tt * th_x
            xd = xdd0 * tt * th_d
            gx = max(gx, np.max(np.abs(_call_vec(ivp.g_x, tt, x, xd))))
            gxd = max(gxd, np.max(np.abs(_call_vec(ivp.g_xdot, tt, x, xd))))
            gp = _call_vec(ivp.g, tt + ht, x, xd)
            gm = _call_vec(ivp.g, tt - ht, x, xd)
            gt = max(gt, np.max(np.abs(gp - gm)) / (2.0 * ht))
    return gx, gxd, gt


def picard_seed(ivp, epsilon, tol=1e-10):
    """Analytic seed on [-tau, tau] via contracting Picard iteration.

    Returns (tau, seed) where seed is a DenseSolution whose single segment
    is a Chebyshev series for (x, x', x'').  epsilon is the requested band
    half-width; it is shrunk automatically when the lam-part of the
    contraction bound

        rho(tau, eps) = (8/3)|lam|((1+eps)/(1-eps))^2
                        + (1/2)||g_x|| tau^2 + ||g_xdot|| tau

    leaves no room below the target, and tau is then halved until both
    rho <= rho_target and the self-map bound hold.  Iteration diffs are
    recorded in seed.info['picard_diffs'].
    """
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon must be in (0,1), got {epsilon}")
    lam = ivp.lam
    xdd0 = accel_at_origin(ivp)
    base = (8.0 / 3.0) * abs(lam)  # eps -> 0 limit of the lam-term
    rho_target = max(RHO_TARGET_FLOOR, 0.5 * (1.0 + base))
    lam_term = lambda e: base * ((1.0 + e) / (1.0 - e)) ** 2

    eps = float(epsilon)
    # leave half the (rho_target - base) gap for the tau-dependent terms
    while lam_term(eps) > base + 0.5 * (rho_target - base):
        eps *= 0.5
        if eps < 1e-9:
            raise ContractionFailure("cannot make the lam-term contract for this lam")

    tau = 0.5
    ok = False
    for _ in range(60):
        gx, gxd, gt = _band_norms(ivp, tau, eps, xdd0)
        rho = lam_term(eps) + 0.5 * gx * tau * tau + gxd * tau
        # first-iterate drift of xdd away from xdd0: g varies by at most
        # gt*tau + gxd*|xd| + gx*|x| ~ (gt + gxd*|xdd0|)*tau + gx*|xdd0|*tau^2/2
        # over the band, and the contraction then keeps the fixed point within
        # drift/(1-rho); require drift <= (1-rho)*eps*|xdd0|
        a = gt + gxd * abs(xdd0)
        b = 0.5 * gx * abs(xdd0)
        self_map = rho + tau * (a + b * tau) / (eps * abs(xdd0))
        if rho <= rho_target and self_map <= 1.0:
            ok = True
            break
        tau *= 0.5
    if not ok:
        raise ContractionFailure(
            f"no tau gives contraction rho<={rho_target:.3f} with band eps={eps:.2e}")

    # Chebyshev-Lobatto nodes (even count -> none lands exactly on t=0)
    s = np.cos(np.pi * np.arange(N_CHEB) / (N_CHEB - 1))
    t = tau * s
    xdd = np.full(N_CHEB, xdd0)
    diffs = []
    deg = N_CHEB - 1
    converged = False
    for _ in range(PICARD_MAX_ITER):
        c2 = _cheb.chebfit(s, xdd, deg)
        c1 = _cheb.chebint(c2, lbnd=0.0, scl=tau)
        c0 = _cheb.chebint(c1, lbnd=0.0, scl=tau)
        x = _cheb.chebval(s, c0)
        xd = _cheb.chebval(s, c1)
        if np.any(x * np.sign(xdd0) <= 0.0):
            raise ContractionFailure("iterate left the admissible band (x hit 0)")
        new = lam * xd * xd / x + _call_vec(ivp.g, t, x, xd)
        d = float(np.max(np.abs(new - xdd)))
        diffs.append(d)
        xdd = new
        if d < 0.1 * tol:
            converged = True
            break
    if not converged:
        raise ContractionFailure(f"Picard iteration did not reach tol in {PICARD_MAX_ITER} steps")

    band_dev = float(np.max(np.abs(xdd - xdd0))) / abs(xdd0)
    if band_dev > eps * 1.05:
        raise ContractionFailure(
            f"converged iterate leaves the certified band: dev={band_dev:.3e} > eps={eps:.3e}")

    c2 = _cheb.chebfit(s, xdd, deg)
    c1 = _cheb.chebint(c2, lbnd=0.0, scl=tau)
    c0 = _cheb.chebint(c1, lbnd=0.0, scl=tau)
    seg = _ChebSegment(0.0, tau, c0, c1, c2)
    info = {
        "tau": tau,
        "epsilon": eps,
        "epsilon_requested": float(epsilon),
        "rho_target": rho_target,
        "rho_bound": rho,
        "picard_diffs": diffs,
        "band_dev": band_dev,
    }
    seed = DenseSolution([-tau, tau], [seg], info=info)
    return tau, seed


# ---------------------------------------------------------------------------
# full integration
# ---------------------------------------------------------------------------

def integrate(ivp, t_end, tol=1e-10, epsilon=0.1):
    """Solve the singular IVP out to t_end (either sign), t_end != 0.

    Returns a DenseSolution on [t_end, 0] (or [0, t_end]).  Raises BlowUp
    if the trajectory drives x to 0 before reaching t_end.
    """
    t_end = float(t_end)
    if t_end == 0.0:
        raise DomainError("t_end must be nonzero")
    tau, seed = picard_seed(ivp, epsilon, tol=tol)
    d = 1.0 if t_end > 0 else -1.0
    seg = seed.segments[0]

    if abs(t_end) <= tau:
        bp = [min(t_end, 0.0), max(t_end, 0.0)]
        return DenseSolution(bp, [seg], info=seed.info)

    x0, xd0, _ = seed.eval(d * tau)
    sgn = np.sign(accel_at_origin(ivp))

    def fun(t, y):
        return (y[1], ivp.lam * y[1] * y[1] / y[0] + ivp.g(t, y[0], y[1]))

    def hit_zero(t, y):
        return y[0] * sgn

    hit_zero.terminal = True
    # Hermite pieces are built BETWEEN ACCEPTED STEPS, not from dense-output
    # resampling: the interpolant wobble between steps is erratic at the
    # local-error scale and gets amplified by 1/h^2 in the reconstructed
    # curvature, while the accepted states drift smoothly.  max_step keeps
    # the quintic truncation error (~ |x^(6)| h^4 / 500) inside the 10*tol
    # pointwise-residual budget.
    h_cap = min(H_MAX, (10.0 * tol / 2.0e4) ** 0.25)
    res = solve_ivp(fun, (d * tau, t_end), (x0, xd0), method="DOP853",
                    rtol=max(tol, 1e-13), atol=0.01 * tol,
                    max_step=h_cap, events=hit_zero)
    if res.status == 1:
        raise BlowUp(f"x reached 0 at t={res.t_events[0][0]:.6g} before t_end={t_end}")
    if not res.success:
        raise BlowUp(f"integration failed: {res.message}")

    ts = res.t
    xs, xds = res.y
    xdds = ivp.lam * xds * xds / xs + _call_vec(ivp.g, ts, xs, xds)

    segs = [seg]
    bps = [0.0, d * tau]
    for i in range(len(ts) - 1):
        if ts[i + 1] == ts[i]:
            continue
        segs.append(_Hermite5Segment(ts[i], ts[i + 1],
                                     xs[i], xds[i], xdds[i],
                                     xs[i + 1], xds[i + 1], xdds[i + 1]))
        bps.append(ts[i + 1])
    if d < 0:
        bps = bps[::-1]
        segs = segs[::-1]
    return DenseSolution(bps, segs, info=seed.info)


# ---------------------------------------------------------------------------
# variational (linearized) equation
# ---------------------------------------------------------------------------

class VariationalCoeffs:
    """Coefficients of y'' = 4*lam*(t*y'-y)/t^2 + alpha(t)*y/t + beta(t)*y' + sigma(t).

    alpha_fn/beta_fn/sigma_fn must be finite at t=0 (stabilized forms); lam
    must lie in (-1/2, 0) so the singular indicial mode decays outward.
    """

    def __init__(self, alpha_fn, beta_fn, sigma_fn, lam):
        lam = float(lam)
        if not -0.5 < lam < 0.0:
            raise DomainError(f"need -1/2 < lam < 0, got {lam}")
        self.alpha_fn = alpha_fn
        self.beta_fn = beta_fn
        self.sigma_fn = sigma_fn
        self.lam = lam


def variational_accel_at_origin(coeffs, ydot0):
    """y''(0) from the t->0 balance of the variational equation."""
    a0 = float(coeffs.alpha_fn(0.0))
    b0 = float(coeffs.beta_fn(0.0))
    s0 = float(coeffs.sigma_fn(0.0))
    return ((a0 + b0) * ydot0 + s0) / (1.0 - 2.0 * coeffs.lam)


def integrate_variational(coeffs, ydot0, t_end, tol=1e-10):
    """Solve the variational equation with y(0)=0, y'(0)=ydot0 out to t_end.

    Starts from the quadratic Taylor state at a short offset tau_v (cubed
    truncation error ~ tol) and continues with DOP853; returns a
    DenseSolution like `integrate`.
    """
    t_end = float(t_end)
    if t_end == 0.0:
        raise DomainError("t_end must be nonzero")
    lam = coeffs.lam
    ydd0 = variational_accel_at_origin(coeffs, ydot0)
    d = 1.0 if t_end > 0 else -1.0
    tau_v = min(0.01, max(1e-4, (6.0 * tol) ** (1.0 / 3.0)))

    def rhs(t, z):
        y, yd = z
        return (yd, 4.0 * lam * (t * yd - y) / (t * t)
                + coeffs.alpha_fn(t) * y / t + coeffs.beta_fn(t) * yd + coeffs.sigma_fn(t))

    def quad_state(t):
        return ydot0 * t + 0.5 * ydd0 * t * t, ydot0 + ydd0 * t

    if abs(t_end) <= tau_v:
        y1, yd1 = quad_state(t_end)
        ydd1 = rhs(t_end, (y1, yd1))[1]
        seg = _Hermite5Segment(0.0, t_end, 0.0, ydot0, ydd0, y1, yd1, ydd1)
        bp = [min(t_end, 0.0), max(t_end, 0.0)]
        return DenseSolution(bp, [seg], info={"tau": abs(t_end), "ydd0": ydd0})

    yt, ydt = quad_state(d * tau_v)
    res = solve_ivp(rhs, (d * tau_v, t_end), (yt, ydt), method="DOP853",
                    rtol=max(tol, 1e-13), atol=0.01 * tol, max_step=H_MAX)
    if not res.success:
        raise BlowUp(f"variational integration failed: {res.message}")

    ts = res.t
    ys, yds = res.y
    ydds = np.array([rhs(ti, (yi, ydi))[1] for ti, yi, ydi in zip(ts, ys, yds)])

    ydd_t = rhs(d * tau_v, (yt, ydt))[1]
    segs = [_Hermite5Segment(0.0, d * tau_v, 0.0, ydot0, ydd0, yt, ydt, ydd_t)]
    bps = [0.0, d * tau_v]
    for i in range(len(ts) - 1):
        segs.append(_Hermite5Segment(ts[i], ts[i + 1],
                                     ys[i], yds[i], ydds[i],
                                     ys[i + 1], yds[i + 1], ydds[i + 1]))
        bps.append(ts[i + 1])
    if d < 0:
        bps = bps[::-1]
        segs = segs[::-1]
    return DenseSolution(bps, segs, info={"tau": tau_v, "ydd0": ydd0})

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the standardized S0 stable density and distribution function.

Both quantities are computed from the Zolotarev/Nolan integral representation
over a finite angle interval, integrated with adaptive Gauss-Kronrod (7/15).
The symmetric alpha=1 corner, where that representation degenerates, is
handled by direct quadrature of the inverse Fourier integral plus a
convergent tail series.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport (M_PI, atan, cos, exp, fabs, log, sin, sqrt, tan,
                        tgamma, INFINITY, isnan, ceil)

cnp.import_array()

cdef double HALF_PI = 0.5 * M_PI
cdef double ALPHA_ONE_TOL = 1e-6
cdef double BETA_ZERO_TOL = 1e-9
cdef double NEAR_ZETA = 1e-11
# quadrature loses accuracy as x approaches zeta; interpolate inside this band
cdef double ZETA_BAND = 1e-6

cdef double[8] XGK = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
]
cdef double[8] WGK = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
]
cdef double[4] WG = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
]

ctypedef double (*integrand_t)(double, void*) noexcept nogil


cdef struct Setup:
    double alpha
    double beta
    double theta0
    double log_scale
    double lo
    double hi
    bint alpha_one


cdef struct Fourier:
    double w
    double c


cdef struct Acc:
    double err
    bint failed


cdef double gk15(integrand_t f, void* data, double a, double b, double* err) noexcept nogil:
    cdef double centre = 0.5 * (a + b)
    cdef double half = 0.5 * (b - a)
    cdef double fc = f(centre, data)
    cdef double resk = fc * WGK[7]
    cdef double resg = fc * WG[3]
    cdef double f1, f2, dx
    cdef int j
    for j in range(7):
        dx = half * XGK[j]
        f1 = f(centre - dx, data)
        f2 = f(centre + dx, data)
        resk += WGK[j] * (f1 + f2)
        if j % 2 == 1:
            resg += WG[j // 2] * (f1 + f2)
    err[0] = fabs((resk - resg) * half)
    return resk * half


cdef int LIMIT = 400


cdef double integrate(integrand_t f, void* data, double* pts, int npts,
                      double rtol, Acc* acc) noexcept nogil:
    """Globally adaptive GK15 over the segments delimited by `pts`.

    The interval with the largest error estimate is bisected until the summed
    error is below ``rtol * |total|`` or LIMIT intervals are in use.
    """
    cdef double[400] lo
    cdef double[400] hi
    cdef double[400] val
    cdef double[400] err
    cdef int n = 0, i, worst
    cdef double total = 0.0, etot = 0.0, mid, e1, e2, v1, v2
    for i in range(npts - 1):
        if pts[i + 1] > pts[i]:
            lo[n] = pts[i]
            hi[n] = pts[i + 1]
            val[n] = gk15(f, data, lo[n], hi[n], &err[n])
            total += val[n]
            etot += err[n]
            n += 1
    while etot > rtol * fabs(total) and etot > 1e-300:
        if n >= LIMIT:
            acc.failed = True
            break
        worst = 0
        for i in range(1, n):
            if err[i] > err[worst]:
                worst = i
        mid = 0.5 * (lo[worst] + hi[worst])
        if mid <= lo[worst] or mid >= hi[worst]:
            # interval exhausted at machine precision
            err[worst] = 0.0
            etot = 0.0
            for i in range(n):
                etot += err[i]
            continue
        v1 = gk15(f, data, lo[worst], mid, &e1)
        v2 = gk15(f, data, mid, hi[worst], &e2)
        total += v1 + v2 - val[worst]
        lo[n] = mid
        hi[n] = hi[worst]
        val[n] = v2
        err[n] = e2
        hi[worst] = mid
        val[worst] = v1
        err[worst] = e1
        n += 1
        etot = 0.0
        for i in range(n):
            etot += err[i]
    acc.err += etot
    return total


cdef inline double log_g(double th, Setup* s) noexcept nogil:
    cdef double a = s.alpha
    cdef double num, den, c3, bt
    if s.alpha_one:
        # th is the complementary angle pi/2 - theta, exact near the peak
        bt = HALF_PI + s.beta * (HALF_PI - th)
        if th <= 0.0:
            return INFINITY
        if bt <= 0.0:
            return -INFINITY
        return (s.log_scale + log(2.0 / M_PI) + log(bt / sin(th))
                + bt * cos(th) / (sin(th) * s.beta))
    # th is pi/2 - theta throughout, so the peak near theta = pi/2 stays resolved
    num = sin(th)
    den = sin(a * (s.hi - th))
    if den <= 0.0:
        den = 1e-300
    if num <= 0.0:
        num = 1e-300
    c3 = cos(a * s.theta0 + (a - 1.0) * (HALF_PI - th))
    if c3 <= 0.0:
        c3 = 1e-300
    return (s.log_scale + log(cos(a * s.theta0)) / (a - 1.0)
            + a / (a - 1.0) * log(num / den) + log(c3 / num))


cdef double pdf_integrand(double th, void* data) noexcept nogil:
    cdef double lg = log_g(th, <Setup*>data)
    if lg > 700.0:
        return 0.0
    return exp(lg - exp(lg))


cdef double cdf_integrand(double th, void* data) noexcept nogil:
    cdef double lg = log_g(th, <Setup*>data)
    if lg > 700.0:
        return 0.0
    return exp(-exp(lg))


cdef double find_level(Setup* s, double level) noexcept nogil:
    """Angle where log g crosses `level`; NaN when it does not."""
    cdef double lo = s.lo, hi = s.hi, mid, flo, fhi, fm
    cdef double span = hi - lo
    cdef int i
    # probe just inside both ends, where 0/0 forms can make log g spurious
    lo = lo + 1e-12 * span
    hi = hi - 1e-12 * span
    flo = log_g(lo, s) - level
    fhi = log_g(hi, s) - level
    if isnan(flo) or isnan(fhi) or (flo > 0) == (fhi > 0):
        return 0.0 / 0.0
    for i in range(200):
        mid = 0.5 * (lo + hi)
        fm = log_g(mid, s) - level
        if (fm > 0) == (flo > 0):
            lo = mid
            flo = fm
        else:
            hi = mid
        if hi - lo < 1e-15 * fabs(mid) or hi - lo < 1e-300:
            break
    return 0.5 * (lo + hi)


cdef int breakpoints(Setup* s, double* pts) noexcept nogil:
    cdef double[7] levels = [-48.0, -24.0, -12.0, -6.0, 0.0, 2.0, 4.0]
    cdef double t
    cdef int n = 0, i, j
    pts[n] = s.lo
    n += 1
    for i in range(7):
        t = find_level(s, levels[i])
        if not isnan(t) and t > s.lo and t < s.hi:
            pts[n] = t
            n += 1
    pts[n] = s.hi
    n += 1
    # insertion sort; level crossings may be in either order
    for i in range(1, n):
        t = pts[i]
        j = i - 1
        while j >= 0 and pts[j] > t:
            pts[j + 1] = pts[j]
            j -= 1
        pts[j + 1] = t
    return n


cdef double fourier_pdf_integrand(double s, void* data) noexcept nogil:
    cdef Fourier* f = <Fourier*>data
    if s <= 0.0:
        return 0.0
    return exp(-s) * cos(f.w * s + f.c * s * log(s))


cdef double fourier_cdf_integrand(double s, void* data) noexcept nogil:
    cdef Fourier* f = <Fourier*>data
    if s <= 0.0:
        return 0.0
    return exp(-s) * sin(f.w * s + f.c * s * log(s)) / s


cdef double fourier_panels(integrand_t f, Fourier* data, double* err) noexcept nogil:
    # half-period panels up to s=40, where exp(-s) < 5e-18
    cdef double smax = 40.0
    cdef double width = M_PI / (fabs(data.w) + 1.0)
    cdef int n = <int>ceil(smax / width)
    cdef double total = 0.0, e
    cdef int i
    # the first panel holds the log singularity of the cdf integrand
    cdef Acc acc
    acc.err = 0.0
    acc.failed = False
    cdef double[2] pts = [0.0, width]
    total += integrate(f, data, pts, 2, 1e-14, &acc)
    err[0] = acc.err
    for i in range(1, n):
        total += gk15(f, data, i * width, (i + 1) * width, &e)
        err[0] += e
    return total


cdef double cauchy_like_pdf(double x, double beta, double* err) noexcept nogil:
    cdef Fourier f
    cdef double term, total, x2
    cdef int k
    err[0] = 0.0
    if fabs(x) > 50.0:
        x2 = x * x
        term = 1.0 / x2
        total = 0.0
        for k in range(40):
            total += term
            term *= -1.0 / x2
            if fabs(term) < 1e-18 * total:
                break
        return total / M_PI
    # Re[exp(-isx) phi(s)] = exp(-s) cos(xs + (2/pi) beta s log s)
    f.w = x
    f.c = 2.0 / M_PI * beta
    return fourier_panels(fourier_pdf_integrand, &f, err) / M_PI


cdef double cauchy_like_cdf(double x, double beta, double* err) noexcept nogil:
    cdef Fourier f
    cdef double term, total, ix, ix2, p
    cdef int k
    err[0] = 0.0
    if fabs(x) > 50.0:
        ix = 1.0 / fabs(x)
        ix2 = ix * ix
        term = ix
        total = 0.0
        for k in range(40):
            total += term / (2 * k + 1)
            term *= -ix2
            if fabs(term) < 1e-18 * total:
                break
        p = total / M_PI
        return 1.0 - p if x > 0 else p
    f.w = x
    f.c = 2.0 / M_PI * beta
    return 0.5 + fourier_panels(fourier_cdf_integrand, &f, err) / M_PI


cdef double pdf_one(double x, double alpha, double beta, double rtol,
                    double* err, bint* failed) noexcept nogil:
    """Density, with a quadratic through zeta - h, zeta, zeta + h close to zeta."""
    cdef double zeta, h, t, f0, fm, fp, em, ep
    cdef bint bm, bp
    if fabs(alpha - 1.0) < ALPHA_ONE_TOL:
        return pdf_core(x, alpha, beta, rtol, err, failed)
    zeta = -beta * tan(HALF_PI * alpha)
    h = ZETA_BAND
    if NEAR_ZETA * (1.0 + fabs(zeta)) > h:
        h = NEAR_ZETA * (1.0 + fabs(zeta))
    t = x - zeta
    if fabs(t) >= h:
        return pdf_core(x, alpha, beta, rtol, err, failed)
    f0 = pdf_core(zeta, alpha, beta, rtol, err, failed)
    fm = pdf_core(zeta - h, alpha, beta, rtol, &em, &bm)
    fp = pdf_core(zeta + h, alpha, beta, rtol, &ep, &bp)
    err[0] = em + ep
    failed[0] = bm or bp
    return f0 + t * (fp - fm) / (2.0 * h) + t * t * (fp - 2.0 * f0 + fm) / (2.0 * h * h)


cdef double pdf_core(double x, double alpha, double beta, double rtol,
                     double* err, bint* failed) noexcept nogil:
    cdef Setup s
    cdef double zeta, xz, val, tpa
    cdef double[12] pts
    cdef int n
    cdef Acc acc
    acc.err = 0.0
    acc.failed = False
    err[0] = 0.0
    failed[0] = False
    if fabs(alpha - 1.0) < ALPHA_ONE_TOL:
        if fabs(beta) < BETA_ZERO_TOL:
            return cauchy_like_pdf(x, beta, err)
        if beta < 0:
            x = -x
            beta = -beta
        s.alpha = 1.0
        s.beta = beta
        s.alpha_one = True
        s.theta0 = HALF_PI
        s.lo = 0.0
        s.hi = M_PI
        s.log_scale = -M_PI * x / (2.0 * beta)
        n = breakpoints(&s, pts)
        val = integrate(pdf_integrand, &s, pts, n, rtol, &acc)
        err[0] = acc.err / (2.0 * beta)
        failed[0] = acc.failed
        return val / (2.0 * beta)
    tpa = tan(HALF_PI * alpha)
    zeta = -beta * tpa
    if x < zeta:
        x = -x
        beta = -beta
        zeta = -zeta
    s.alpha = alpha
    s.beta = beta
    s.alpha_one = False
    s.theta0 = atan(beta * tpa) / alpha
    xz = x - zeta
    if xz < NEAR_ZETA * (1.0 + fabs(zeta)):
        return (tgamma(1.0 + 1.0 / alpha) * cos(s.theta0)
                / (M_PI * (1.0 + zeta * zeta) ** (0.5 / alpha)))
    s.lo = 0.0
    s.hi = HALF_PI + s.theta0
    if s.hi - s.lo <= 1e-14:
        return 0.0
    s.log_scale = alpha / (alpha - 1.0) * log(xz)
    n = breakpoints(&s, pts)
    val = integrate(pdf_integrand, &s, pts, n, rtol, &acc)
    err[0] = acc.err * alpha / (M_PI * fabs(alpha - 1.0) * xz)
    failed[0] = acc.failed
    return val * alpha / (M_PI * fabs(alpha - 1.0) * xz)


cdef double cdf_one(double x, double alpha, double beta, double rtol,
                    double* err, bint* failed) noexcept nogil:
    cdef Setup s
    cdef double zeta, xz, val, tpa, c1
    cdef double[12] pts
    cdef int n
    cdef bint flip = False
    cdef Acc acc
    acc.err = 0.0
    acc.failed = False
    err[0] = 0.0
    failed[0] = False
    if fabs(alpha - 1.0) < ALPHA_ONE_TOL:
        if fabs(beta) < BETA_ZERO_TOL:
            return cauchy_like_cdf(x, beta, err)
        if beta < 0:
            x = -x
            beta = -beta
            flip = True
        s.alpha = 1.0
        s.beta = beta
        s.alpha_one = True
        s.theta0 = HALF_PI
        s.lo = 0.0
        s.hi = M_PI
        s.log_scale = -M_PI * x / (2.0 * beta)
        n = breakpoints(&s, pts)
        val = integrate(cdf_integrand, &s, pts, n, rtol, &acc) / M_PI
        err[0] = acc.err / M_PI
        failed[0] = acc.failed
        return 1.0 - val if flip else val
    tpa = tan(HALF_PI * alpha)
    zeta = -beta * tpa
    if x < zeta:
        x = -x
        beta = -beta
        zeta = -zeta
        flip = True
    s.alpha = alpha
    s.beta = beta
    s.alpha_one = False
    s.theta0 = atan(beta * tpa) / alpha
    xz = x - zeta
    if xz < NEAR_ZETA * (1.0 + fabs(zeta)):
        val = (HALF_PI - s.theta0) / M_PI
        return 1.0 - val if flip else val
    c1 = (HALF_PI - s.theta0) / M_PI if alpha < 1.0 else 1.0
    s.lo = 0.0
    s.hi = HALF_PI + s.theta0
    if s.hi - s.lo <= 1e-14:
        return 1.0 - c1 if flip else c1
    s.log_scale = alpha / (alpha - 1.0) * log(xz)
    n = breakpoints(&s, pts)
    val = integrate(cdf_integrand, &s, pts, n, rtol, &acc) / M_PI
    err[0] = acc.err / M_PI
    failed[0] = acc.failed
    if alpha < 1.0:
        val = c1 + val
    else:
        val = c1 - val
    return 1.0 - val if flip else val


def pdf_std(x, double alpha, double beta, double rtol=1e-10):
    """Standardized S0 density at each point of `x`.

    Returns ``(density, abs_error, failed)`` arrays of the shape of `x`.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xs.shape[0], i
    out = np.empty(n, dtype=np.float64)
    errs = np.empty(n, dtype=np.float64)
    flags = np.zeros(n, dtype=np.uint8)
    cdef double[::1] xv = xs
    cdef double[::1] ov = out
    cdef double[::1] ev = errs
    cdef unsigned char[::1] fv = flags
    cdef bint failed
    with nogil:
        for i in range(n):
            ov[i] = pdf_one(xv[i], alpha, beta, rtol, &ev[i], &failed)
            fv[i] = failed
    shape = np.shape(x)
    return out.reshape(shape), errs.reshape(shape), flags.astype(bool).reshape(shape)


def cdf_std(x, double alpha, double beta, double rtol=1e-12):
    """Standardized S0 distribution function at each point of `x`.

    Returns ``(probability, abs_error, failed)`` arrays of the shape of `x`.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef Py_ssize_t n = xs.shape[0], i
    out = np.empty(n, dtype=np.float64)
    errs = np.empty(n, dtype=np.float64)
    flags = np.zeros(n, dtype=np.uint8)
    cdef double[::1] xv = xs
    cdef double[::1] ov = out
    cdef double[::1] ev = errs
    cdef unsigned char[::1] fv = flags
    cdef bint failed
    with nogil:
        for i in range(n):
            ov[i] = cdf_one(xv[i], alpha, beta, rtol, &ev[i], &failed)
            fv[i] = failed
    shape = np.shape(x)
    return out.reshape(shape), errs.reshape(shape), flags.astype(bool).reshape(shape)

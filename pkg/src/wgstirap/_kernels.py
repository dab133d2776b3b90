"""Compiled inner loops: 3x3 eigensolver, right-hand sides and the DOPRI5 driver.

Everything here works on plain arrays so numba can compile it without
object mode. Public wrappers with validation live in ``eigen`` and
``propagate``.
"""
import math

import numpy as np
from numba import njit

# status codes shared with the Python wrappers
OK = 0
NEAR_DEFECTIVE = 1
DEGENERATE = 2
STEP_UNDERFLOW = 3
TOO_MANY_STEPS = 4

# right-hand side selectors
MODE_BARE = 0
MODE_EXACT_FRAME = 1
MODE_REDUCED = 2

# reduced-model variants
VARIANT_HERMITIAN = 0
VARIANT_TARGET = 1
VARIANT_INITIAL = 2

EP_THRESHOLD = 1e-8

_PERMS = np.array([[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]])

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [1 / 5, 0.0, 0.0, 0.0, 0.0],
    [3 / 40, 9 / 40, 0.0, 0.0, 0.0],
    [44 / 45, -56 / 15, 32 / 9, 0.0, 0.0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0.0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
])
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# quartic continuous extension (Shampine 1986)
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True, nogil=True)
def couplings(z, a, L):
    v = math.exp(-a * (z - 0.5 * L) / L)
    return v, 1.0 / v


@njit(cache=True, nogil=True)
def fill_hamiltonian(z, a, L, gamma, site, H):
    v, w = couplings(z, a, L)
    for i in range(3):
        for j in range(3):
            H[i, j] = 0.0
    H[0, 1] = v
    H[1, 0] = v
    H[1, 2] = w
    H[2, 1] = w
    if site > 0:
        H[site - 1, site - 1] = -1j * gamma


@njit(cache=True, nogil=True)
def _cbrt(x):
    if x == 0:
        return 0j
    return np.exp(np.log(x) / 3.0)


@njit(cache=True, nogil=True)
def _null_vector(M, out):
    """Null vector of a rank-2 symmetric 3x3 matrix via row cross products.

    Uses the bilinear cross product, so the result is orthogonal to every row
    without conjugation. Returns the squared Euclidean norm of the best candidate.
    """
    best = -1.0
    for (i, j) in ((0, 1), (0, 2), (1, 2)):
        c0 = M[i, 1] * M[j, 2] - M[i, 2] * M[j, 1]
        c1 = M[i, 2] * M[j, 0] - M[i, 0] * M[j, 2]
        c2 = M[i, 0] * M[j, 1] - M[i, 1] * M[j, 0]
        n2 = abs(c0) ** 2 + abs(c1) ** 2 + abs(c2) ** 2
        if n2 > best:
            best = n2
            out[0] = c0
            out[1] = c1
            out[2] = c2
    return best


@njit(cache=True, nogil=True)
def eig3(H, E, V):
    """Eigenvalues and c-normalized eigenvectors of a complex symmetric 3x3 matrix.

    Writes ``E[k]`` and ``V[k, :]`` in Cardano root order (callers sort or
    label). Returns ``OK``, ``NEAR_DEFECTIVE`` when a unit eigenvector has
    ``|v @ v| < EP_THRESHOLD`` or ``DEGENERATE`` when the null space is
    not one-dimensional.
    """
    m = (H[0, 0] + H[1, 1] + H[2, 2]) / 3.0
    B = np.empty((3, 3), dtype=np.complex128)
    scale = 0.0
    for i in range(3):
        for j in range(3):
            B[i, j] = H[i, j]
            scale = max(scale, abs(H[i, j]))
        B[i, i] -= m
    if scale == 0.0:
        scale = 1.0
    # char poly of B: mu^3 + p mu + q
    p = (B[0, 0] * B[1, 1] - B[0, 1] * B[1, 0]
         + B[0, 0] * B[2, 2] - B[0, 2] * B[2, 0]
         + B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
    det = (B[0, 0] * (B[1, 1] * B[2, 2] - B[1, 2] * B[2, 1])
           - B[0, 1] * (B[1, 0] * B[2, 2] - B[1, 2] * B[2, 0])
           + B[0, 2] * (B[1, 0] * B[2, 1] - B[1, 1] * B[2, 0]))
    q = -det
    disc = np.sqrt(q * q / 4.0 + p * p * p / 27.0)
    u3a = -q / 2.0 + disc
    u3b = -q / 2.0 - disc
    u3 = u3a if abs(u3a) >= abs(u3b) else u3b
    u = _cbrt(u3)
    rot = complex(-0.5, math.sqrt(3.0) / 2.0)
    mus = np.empty(3, dtype=np.complex128)
    for k in range(3):
        if u == 0:
            mus[k] = 0.0
        else:
            uk = u * rot ** k
            mus[k] = uk - p / (3.0 * uk)
    # Newton polish; converges quadratically for simple roots
    for k in range(3):
        for _ in range(3):
            mu = mus[k]
            f = (mu * mu + p) * mu + q
            df = 3.0 * mu * mu + p
            if f == 0 or abs(df) <= 1e-14 * scale * scale:
                break
            step = f / df
            mus[k] = mu - step
            if abs(step) <= 1e-16 * scale:
                break
    # Cardano splits a repeated root by ~sqrt(eps); the cluster mean is exact
    tight = 1e-7 * scale
    d01 = abs(mus[0] - mus[1]) < tight
    d02 = abs(mus[0] - mus[2]) < tight
    d12 = abs(mus[1] - mus[2]) < tight
    clustered = np.zeros(3, dtype=np.bool_)
    if (d01 and d02) or (d01 and d12) or (d02 and d12):
        for k in range(3):
            mus[k] = 0.0
            clustered[k] = True
    elif d01 or d02 or d12:
        i, j = (0, 1) if d01 else ((0, 2) if d02 else (1, 2))
        c = 0.5 * (mus[i] + mus[j])
        mus[i] = c
        mus[j] = c
        clustered[i] = True
        clustered[j] = True
    status = OK
    vec = np.empty(3, dtype=np.complex128)
    M = np.empty((3, 3), dtype=np.complex128)
    for k in range(3):
        E[k] = mus[k] + m
        for i in range(3):
            for j in range(3):
                M[i, j] = B[i, j]
            M[i, i] -= mus[k]
        n2 = _null_vector(M, vec)
        # a merged root is only known to ~tight, so the rank test is looser
        tol = (tight * scale) ** 2 if clustered[k] else (1e-13 * scale * scale) ** 2
        if n2 <= tol:
            status = DEGENERATE
            for i in range(3):
                V[k, i] = 1.0 if i == k else 0.0
            continue
        nrm = math.sqrt(n2)
        for i in range(3):
            vec[i] /= nrm
        cn = vec[0] * vec[0] + vec[1] * vec[1] + vec[2] * vec[2]
        if abs(cn) < EP_THRESHOLD and status == OK:
            status = NEAR_DEFECTIVE
        s = np.sqrt(cn) if cn != 0 else complex(1.0, 0.0)
        for i in range(3):
            V[k, i] = vec[i] / s
        if abs(cn) >= EP_THRESHOLD:
            # c-Rayleigh quotient: second-order accurate in the vector error
            rq = 0j
            for i in range(3):
                hv = B[i, 0] * V[k, 0] + B[i, 1] * V[k, 1] + B[i, 2] * V[k, 2]
                rq += V[k, i] * hv
            E[k] = rq + m
    real = True
    for i in range(3):
        for j in range(3):
            if H[i, j].imag != 0.0:
                real = False
    if real:
        # real symmetric: eigenpairs are real, drop Cardano's rounding-level imaginary parts
        for k in range(3):
            E[k] = E[k].real
            for i in range(3):
                V[k, i] = V[k, i].real
    return status


@njit(cache=True, nogil=True)
def sort_and_sign(E, V):
    """Order eigenpairs by real part (then imaginary) and make the largest
    component of each vector have positive real part."""
    for i in range(3):
        for j in range(2 - i):
            a, b = E[j], E[j + 1]
            if a.real > b.real or (a.real == b.real and a.imag > b.imag):
                E[j], E[j + 1] = b, a
                for c in range(3):
                    t = V[j, c]
                    V[j, c] = V[j + 1, c]
                    V[j + 1, c] = t
    for k in range(3):
        big = 0
        for c in range(1, 3):
            if abs(V[k, c]) > abs(V[k, big]):
                big = c
        x = V[k, big]
        flip = x.real < 0 or (x.real == 0 and x.imag < 0)
        if flip:
            for c in range(3):
                V[k, c] = -V[k, c]


@njit(cache=True, nogil=True)
def reference_vectors(z, a, L, R):
    """Absorption-free eigenvectors (phi-, phi0, phi+) as rows of ``R``."""
    v, w = couplings(z, a, L)
    th = math.atan2(v, w)
    s = math.sin(th)
    c = math.cos(th)
    r = 1.0 / math.sqrt(2.0)
    R[0, 0] = s * r
    R[0, 1] = -r
    R[0, 2] = c * r
    R[1, 0] = c
    R[1, 1] = 0.0
    R[1, 2] = -s
    R[2, 0] = s * r
    R[2, 1] = r
    R[2, 2] = c * r


@njit(cache=True, nogil=True)
def label_like(R, E, V, Eout, Vout):
    """Relabel eigenpairs to best match reference vectors ``R`` (rows) and fix
    each sign so the c-product with its reference has positive real part."""
    O = np.empty((3, 3), dtype=np.complex128)
    for j in range(3):
        for k in range(3):
            O[j, k] = R[j, 0] * V[k, 0] + R[j, 1] * V[k, 1] + R[j, 2] * V[k, 2]
    best = -1.0
    bp = 0
    for n in range(6):
        s = abs(O[0, _PERMS[n, 0]]) + abs(O[1, _PERMS[n, 1]]) + abs(O[2, _PERMS[n, 2]])
        if s > best:
            best = s
            bp = n
    for j in range(3):
        k = _PERMS[bp, j]
        Eout[j] = E[k]
        sg = -1.0 if O[j, k].real < 0 else 1.0
        for c in range(3):
            Vout[j, c] = sg * V[k, c]


@njit(cache=True, nogil=True)
def model_frame(z, a, L, gamma, site, Eout, Vout):
    """Labeled, sign-fixed exact eigensystem of the model Hamiltonian at real z."""
    H = np.empty((3, 3), dtype=np.complex128)
    fill_hamiltonian(z, a, L, gamma, site, H)
    E = np.empty(3, dtype=np.complex128)
    V = np.empty((3, 3), dtype=np.complex128)
    status = eig3(H, E, V)
    R = np.empty((3, 3), dtype=np.complex128)
    reference_vectors(z, a, L, R)
    label_like(R, E, V, Eout, Vout)
    return status


@njit(cache=True, nogil=True)
def frame_couplings(z, a, L, E, V, C):
    """C[j, k] = <phi_j | d phi_k / dz> (bilinear) from dH/dz and the eigenpairs.

    Uses phi_j . H' phi_k / (E_k - E_j), exact for a non-degenerate spectrum;
    the diagonal vanishes under c-normalization.
    """
    v, w = couplings(z, a, L)
    k = a / L
    dv = -k * v
    dw = k * w
    for j in range(3):
        for m in range(3):
            if j == m:
                C[j, m] = 0.0
                continue
            x0 = dv * V[m, 1]
            x1 = dv * V[m, 0] + dw * V[m, 2]
            x2 = dw * V[m, 1]
            num = V[j, 0] * x0 + V[j, 1] * x1 + V[j, 2] * x2
            C[j, m] = num / (E[m] - E[j])


@njit(cache=True, nogil=True)
def reduced_matrix(z, a, L, gamma, variant, M):
    """Adiabatic-frame generator of the reduced models (i da/dz = M a)."""
    v, w = couplings(z, a, L)
    om2 = v * v + w * w
    om = math.sqrt(om2)
    kap = math.sqrt(2.0) * a / (L * om2)
    side = 0.0
    mid = 0.0
    if variant == VARIANT_TARGET:
        side = gamma * v * v / (2 * om2)
        mid = gamma * w * w / om2
    elif variant == VARIANT_INITIAL:
        side = gamma * w * w / (2 * om2)
        mid = gamma * v * v / om2
    M[0, 0] = -om - 1j * side
    M[0, 1] = 1j * kap
    M[0, 2] = 0.0
    M[1, 0] = -1j * kap
    M[1, 1] = -1j * mid
    M[1, 2] = -1j * kap
    M[2, 0] = 0.0
    M[2, 1] = 1j * kap
    M[2, 2] = om - 1j * side


@njit(cache=True, nogil=True)
def rhs(mode, p, z, y, out):
    """dy/dz for the selected model. ``p = (a, L, gamma, site_or_variant)``."""
    a = p[0]
    L = p[1]
    gamma = p[2]
    sel = int(p[3])
    if mode == MODE_BARE:
        v, w = couplings(z, a, L)
        out[0] = -1j * v * y[1]
        out[1] = -1j * (v * y[0] + w * y[2])
        out[2] = -1j * w * y[1]
        if sel > 0:
            out[sel - 1] += -gamma * y[sel - 1]
        return OK
    if mode == MODE_REDUCED:
        M = np.empty((3, 3), dtype=np.complex128)
        reduced_matrix(z, a, L, gamma, sel, M)
        for i in range(3):
            out[i] = -1j * (M[i, 0] * y[0] + M[i, 1] * y[1] + M[i, 2] * y[2])
        return OK
    E = np.empty(3, dtype=np.complex128)
    V = np.empty((3, 3), dtype=np.complex128)
    status = model_frame(z, a, L, gamma, sel, E, V)
    C = np.empty((3, 3), dtype=np.complex128)
    frame_couplings(z, a, L, E, V, C)
    for j in range(3):
        out[j] = -1j * E[j] * y[j] - (C[j, 0] * y[0] + C[j, 1] * y[1] + C[j, 2] * y[2])
    return status


@njit(cache=True, nogil=True)
def _err_norm(err, y, ynew, rtol, atol):
    # atol is relative to the state norm: absorption can shrink the whole
    # vector by tens of orders of magnitude while ratios stay O(1)
    ny = 0.0
    nn = 0.0
    for i in range(3):
        ny += abs(y[i]) ** 2
        nn += abs(ynew[i]) ** 2
    ref = math.sqrt(max(ny, nn))
    if ref == 0.0:
        ref = 1.0
    s = 0.0
    for i in range(3):
        sc = atol * ref + rtol * max(abs(y[i]), abs(ynew[i]))
        s += (abs(err[i]) / sc) ** 2
    return math.sqrt(s / 3.0)


@njit(cache=True, nogil=True)
def dopri5(mode, p, y0, z0, z1, samples, rtol, atol, max_step, min_step, max_steps, out):
    """Integrate from z0 to z1 with Dormand-Prince 5(4) and PI step control.

    ``samples`` must be sorted within [z0, z1]; the dense-output solution at
    each is written to ``out``. Returns ``(status, accepted, rejected, nfev)``.
    """
    n_samples = samples.shape[0]
    K = np.empty((7, 3), dtype=np.complex128)
    y = y0.copy()
    ynew = np.empty(3, dtype=np.complex128)
    ytmp = np.empty(3, dtype=np.complex128)
    err = np.empty(3, dtype=np.complex128)
    f1 = np.empty(3, dtype=np.complex128)
    z = z0
    status = rhs(mode, p, z, y, K[0])
    nfev = 1
    if status != OK:
        return status, 0, 0, nfev

    si = 0
    while si < n_samples and samples[si] <= z0:
        for i in range(3):
            out[si, i] = y[i]
        si += 1

    span = z1 - z0
    # initial step (Hairer, Norsett & Wanner II.4)
    d0 = 0.0
    d1 = 0.0
    for i in range(3):
        sc = atol + abs(y[i]) * rtol
        d0 += (abs(y[i]) / sc) ** 2
        d1 += (abs(K[0, i]) / sc) ** 2
    d0 = math.sqrt(d0 / 3)
    d1 = math.sqrt(d1 / 3)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, span)
    for i in range(3):
        ytmp[i] = y[i] + h0 * K[0, i]
    rhs(mode, p, z0 + h0, ytmp, f1)
    nfev += 1
    d2 = 0.0
    for i in range(3):
        sc = atol + abs(y[i]) * rtol
        d2 += (abs(f1[i] - K[0, i]) / sc) ** 2
    d2 = math.sqrt(d2 / 3) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    h = min(100 * h0, h1, span, max_step)

    beta = 0.04
    alpha = 0.2 - 0.75 * beta
    err_old = 1e-4
    rejected_last = False
    accepted = 0
    rejected = 0
    while z < z1:
        if accepted + rejected >= max_steps:
            return TOO_MANY_STEPS, accepted, rejected, nfev
        if h < min_step:
            return STEP_UNDERFLOW, accepted, rejected, nfev
        last = False
        if z + h >= z1:
            h = z1 - z
            last = True
        for s in range(1, 6):
            for i in range(3):
                acc = 0j
                for r in range(s):
                    acc += _A[s, r] * K[r, i]
                ytmp[i] = y[i] + h * acc
            status = rhs(mode, p, z + _C[s] * h, ytmp, K[s])
            if status != OK:
                return status, accepted, rejected, nfev
        for i in range(3):
            acc = 0j
            for r in range(6):
                acc += _B[r] * K[r, i]
            ynew[i] = y[i] + h * acc
        znew = z1 if last else z + h
        status = rhs(mode, p, znew, ynew, K[6])
        nfev += 6
        if status != OK:
            return status, accepted, rejected, nfev
        for i in range(3):
            acc = 0j
            for r in range(7):
                acc += _E[r] * K[r, i]
            err[i] = h * acc
        en = _err_norm(err, y, ynew, rtol, atol)
        if en <= 1.0:
            accepted += 1
            while si < n_samples and samples[si] <= znew:
                if samples[si] >= znew:
                    for i in range(3):
                        out[si, i] = ynew[i]
                else:
                    th = (samples[si] - z) / h
                    q0 = th
                    q1 = th * th
                    q2 = q1 * th
                    q3 = q2 * th
                    for i in range(3):
                        acc = 0j
                        for r in range(7):
                            b = _P[r, 0] * q0 + _P[r, 1] * q1 + _P[r, 2] * q2 + _P[r, 3] * q3
                            acc += b * K[r, i]
                        out[si, i] = y[i] + h * acc
                si += 1
            if en == 0.0:
                fac = 10.0
            else:
                fac = 0.9 * en ** (-alpha) * err_old ** beta
                fac = min(10.0, max(0.2, fac))
            if rejected_last:
                fac = min(fac, 1.0)
            err_old = max(en, 1e-4)
            rejected_last = False
            z = znew
            for i in range(3):
                y[i] = ynew[i]
                K[0, i] = K[6, i]
            h = min(h * fac, max_step)
        else:
            rejected += 1
            rejected_last = True
            h = h * max(0.2, 0.9 * en ** (-0.2))
    while si < n_samples:
        for i in range(3):
            out[si, i] = y[i]
        si += 1
    return OK, accepted, rejected, nfev

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_pykernels``.

Same signatures, shapes and status codes. Edges are processed one at a time
with small dense loops; each edge runs its own gain iteration.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

STATUS_OK = 0
STATUS_NOT_CONVERGED = 1
STATUS_AVOIDANCE = 2
STATUS_INDEFINITE = 3


cdef bint _cholesky(double[:, ::1] S, double[:, ::1] L, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = S[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            if i == j:
                if not acc > 0.0:
                    return False
                L[i, i] = sqrt(acc)
            else:
                L[i, j] = acc / L[j, j]
        for j in range(i + 1, n):
            L[i, j] = 0.0
    return True


cdef void _chol_solve(double[:, ::1] L, double[:, ::1] B, Py_ssize_t n, Py_ssize_t cols) noexcept nogil:
    """Overwrite ``B`` (n x cols) with ``S^{-1} B``."""
    cdef Py_ssize_t i, k, c
    cdef double acc
    for c in range(cols):
        for i in range(n):
            acc = B[i, c]
            for k in range(i):
                acc -= L[i, k] * B[k, c]
            B[i, c] = acc / L[i, i]
        for i in range(n - 1, -1, -1):
            acc = B[i, c]
            for k in range(i + 1, n):
                acc -= L[k, i] * B[k, c]
            B[i, c] = acc / L[i, i]


def edge_solve(z0, K, kappa, double dt, alpha, beta, alpha_T, beta_T, d, double r, double eps,
               R, double tol, int t_max):
    cdef double[:, ::1] z0v = np.ascontiguousarray(z0, dtype=np.float64)
    Kout = np.array(K, dtype=np.float64, order="C")
    kout = np.array(kappa, dtype=np.float64, order="C")
    cdef double[:, :, :, ::1] Kv = Kout
    cdef double[:, :, ::1] kv = kout
    cdef Py_ssize_t M = Kout.shape[0], T = Kout.shape[1], n = Kout.shape[2], n2 = Kout.shape[3]
    cdef double[::1] al = np.ascontiguousarray(alpha, dtype=np.float64)
    cdef double[::1] be = np.ascontiguousarray(beta, dtype=np.float64)
    cdef double[::1] alT = np.ascontiguousarray(alpha_T, dtype=np.float64)
    cdef double[::1] beT = np.ascontiguousarray(beta_T, dtype=np.float64)
    cdef double[:, ::1] dv = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[:, :, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)

    Pout = np.zeros((M, T + 1, n2, n2))
    sout = np.zeros((M, T + 1, n2))
    zout = np.zeros((M, T + 1, n2))
    iters = np.zeros(M, dtype=np.int64)
    delta = np.full(M, np.inf)
    status = np.full(M, STATUS_NOT_CONVERGED, dtype=np.int64)
    fail_step = np.full(M, -1, dtype=np.int64)
    cdef double[:, :, :, ::1] Pv = Pout
    cdef double[:, :, ::1] sv = sout
    cdef double[:, :, ::1] zv = zout
    cdef long long[::1] itv = iters
    cdef double[::1] dlv = delta
    cdef long long[::1] stv = status
    cdef long long[::1] fsv = fail_step

    # edge blocks f = [[I, dt I], [0, I]], g = [dt^2/2 I; dt I]
    f_np = np.kron(np.array([[1.0, dt], [0.0, 1.0]]), np.eye(n))
    g_np = np.kron(np.array([[0.5 * dt * dt], [dt]]), np.eye(n))
    cdef double[:, ::1] f = f_np
    cdef double[:, ::1] g = g_np

    cdef double[:, ::1] za = np.empty((T + 1, n2))
    cdef double[::1] w = np.empty(T + 1)
    cdef double[:, ::1] wg = np.empty((T + 1, n))
    cdef double[:, :, ::1] Pa = np.empty((T + 1, n2, n2))
    cdef double[:, ::1] sa = np.empty((T + 1, n2))
    cdef double[:, :, ::1] Kn = np.empty((T, n, n2))
    cdef double[:, ::1] kn = np.empty((T, n))
    cdef double[:, ::1] PG = np.empty((n2, n))
    cdef double[:, ::1] S = np.empty((n, n))
    cdef double[:, ::1] L = np.empty((n, n))
    cdef double[:, ::1] B = np.empty((n, n2 + 1))
    cdef double[:, ::1] PF = np.empty((n2, n2))
    cdef double[:, ::1] fPG = np.empty((n2, n))
    cdef double[::1] tmp = np.empty(n2)

    cdef Py_ssize_t m, it, j, a, b, c
    cdef double r2 = r * r, acc, ss, root, den, coef, nor, diff, best, bj
    cdef bint dead, failed, barrier

    for m in range(M):
        barrier = be[m] > 0 or beT[m] > 0
        for it in range(t_max):
            # forward prediction with the current affine law
            for a in range(n2):
                za[0, a] = z0v[m, a]
            for j in range(T):
                for b in range(n):
                    acc = kv[m, j, b]
                    for c in range(n2):
                        acc += Kv[m, j, b, c] * za[j, c]
                    tmp[b] = acc
                for a in range(n2):
                    acc = 0.0
                    for c in range(n2):
                        acc += f[a, c] * za[j, c]
                    for b in range(n):
                        acc += g[a, b] * tmp[b]
                    za[j + 1, a] = acc
            # barrier weights; stop on entering the avoidance region
            dead = False
            for j in range(T + 1):
                ss = 0.0
                for a in range(n):
                    ss += (za[j, a] + dv[m, a]) * (za[j, a] + dv[m, a])
                root = sqrt(1.0 + eps * ss)
                den = 2.0 * (root - 1.0) / eps - r2
                if barrier and not den > 0:
                    dead = True
                    fsv[m] = j
                    break
                bj = be[m] if j < T else beT[m]
                if bj > 0:
                    w[j] = bj / den
                    for a in range(n):
                        wg[j, a] = -(bj / (den * den)) * 2.0 * (za[j, a] + dv[m, a]) / root
                else:
                    w[j] = 0.0
                    for a in range(n):
                        wg[j, a] = 0.0
            if dead:
                stv[m] = STATUS_AVOIDANCE
                zv[m, :, :] = za
                break
            # terminal cost-to-go
            nor = 0.0
            for a in range(n2):
                nor += za[T, a] * za[T, a]
            for a in range(n2):
                for b in range(n2):
                    Pa[T, a, b] = 0.0
                Pa[T, a, a] = dt * (alT[m] + w[T])
                sa[T, a] = 0.0
            for a in range(n):
                sa[T, a] = 0.5 * dt * nor * wg[T, a]
            failed = False
            for j in range(T - 1, -1, -1):
                # PG = P_{j+1} g ; S = R + PG^T g
                for a in range(n2):
                    for b in range(n):
                        acc = 0.0
                        for c in range(n2):
                            acc += Pa[j + 1, a, c] * g[c, b]
                        PG[a, b] = acc
                for a in range(n):
                    for b in range(n):
                        acc = Rv[m, a, b]
                        for c in range(n2):
                            acc += PG[c, a] * g[c, b]
                        S[a, b] = acc
                if not _cholesky(S, L, n):
                    failed = True
                    break
                # B = [PG^T f | g^T s_{j+1}]
                for a in range(n):
                    for b in range(n2):
                        acc = 0.0
                        for c in range(n2):
                            acc += PG[c, a] * f[c, b]
                        B[a, b] = acc
                    acc = 0.0
                    for c in range(n2):
                        acc += g[c, a] * sa[j + 1, c]
                    B[a, n2] = acc
                _chol_solve(L, B, n, n2 + 1)
                for a in range(n):
                    for b in range(n2):
                        Kn[j, a, b] = -B[a, b]
                    kn[j, a] = -B[a, n2]
                # P_j = f^T P f + (f^T PG) K + coef I
                for a in range(n2):
                    for b in range(n2):
                        acc = 0.0
                        for c in range(n2):
                            acc += Pa[j + 1, a, c] * f[c, b]
                        PF[a, b] = acc
                for a in range(n2):
                    for b in range(n):
                        acc = 0.0
                        for c in range(n2):
                            acc += f[c, a] * PG[c, b]
                        fPG[a, b] = acc
                coef = dt * (al[m] + w[j])
                for a in range(n2):
                    for b in range(n2):
                        acc = 0.0
                        for c in range(n2):
                            acc += f[c, a] * PF[c, b]
                        for c in range(n):
                            acc += fPG[a, c] * Kn[j, c, b]
                        Pa[j, a, b] = acc
                    Pa[j, a, a] += coef
                # s_j = f^T (PG kappa + s_{j+1}) + h_j
                for a in range(n2):
                    acc = sa[j + 1, a]
                    for c in range(n):
                        acc += PG[a, c] * kn[j, c]
                    tmp[a] = acc
                nor = 0.0
                for a in range(n2):
                    nor += za[j, a] * za[j, a]
                for a in range(n2):
                    acc = 0.0
                    for c in range(n2):
                        acc += f[c, a] * tmp[c]
                    sa[j, a] = acc
                for a in range(n):
                    sa[j, a] += 0.5 * dt * nor * wg[j, a]
            itv[m] += 1
            zv[m, :, :] = za
            if failed:
                stv[m] = STATUS_INDEFINITE
                break
            best = 0.0
            for j in range(T):
                acc = 0.0
                for a in range(n):
                    for b in range(n2):
                        diff = Kn[j, a, b] - Kv[m, j, a, b]
                        acc += diff * diff
                    diff = kn[j, a] - kv[m, j, a]
                    acc += diff * diff
                if acc > best:
                    best = acc
            Kv[m, :, :, :] = Kn
            kv[m, :, :] = kn
            Pv[m, :, :, :] = Pa
            sv[m, :, :] = sa
            dlv[m] = sqrt(best)
            if dlv[m] <= tol:
                stv[m] = STATUS_OK
                break
    return Kout, kout, Pout, sout, zout, iters, delta, status, fail_step


cdef double _residual(double[:, ::1] u, double[:, ::1] a, long long[::1] src, long long[::1] dst,
                      Py_ssize_t M, Py_ssize_t n) noexcept:
    cdef Py_ssize_t e, c
    cdef double acc = 0.0, diff
    for e in range(M):
        for c in range(n):
            diff = u[src[e], c] - u[dst[e], c] - a[e, c]
            acc += diff * diff
    return sqrt(acc)


def descent_rounds(u, a, src, dst, nbr_ptr, nbr_edge, double gamma, int l_max, double tol):
    uo = np.array(u, dtype=np.float64, order="C")
    cdef double[:, ::1] uv = uo
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef long long[::1] sv = np.ascontiguousarray(src, dtype=np.int64)
    cdef long long[::1] dv = np.ascontiguousarray(dst, dtype=np.int64)
    cdef long long[::1] ptr = np.ascontiguousarray(nbr_ptr, dtype=np.int64)
    cdef long long[::1] inc = np.ascontiguousarray(nbr_edge, dtype=np.int64)
    cdef Py_ssize_t N = uo.shape[0], n = uo.shape[1], M = av.shape[0]
    nxt = np.empty_like(uo)
    cdef double[:, ::1] nv = nxt
    cdef double[:, ::1] cur
    res = [_residual(uv, av, sv, dv, M, n)]
    cdef int rounds = 0
    cdef Py_ssize_t i, p, e, c
    cdef double acc, last = res[0]
    while rounds < l_max and last > tol:
        for i in range(N):
            for c in range(n):
                acc = 0.0
                for p in range(ptr[i], ptr[i + 1]):
                    e = inc[p]
                    if sv[e] == i:
                        acc += uv[i, c] - uv[dv[e], c] - av[e, c]
                    else:
                        acc += uv[i, c] - uv[sv[e], c] + av[e, c]
                nv[i, c] = uv[i, c] - 2.0 * gamma * acc
        cur = uv
        uv = nv
        nv = cur
        rounds += 1
        last = _residual(uv, av, sv, dv, M, n)
        res.append(last)
    return np.asarray(uv).copy(), np.array(res), rounds

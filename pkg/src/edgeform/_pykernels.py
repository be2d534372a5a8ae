"""Pure numpy implementations of the hot loops.

Same signatures and semantics as the compiled ``_ckernels`` module. Edges are
batched along the leading axis; each edge keeps its own stopping state so
results for one edge never depend on another.
"""

import numpy as np

STATUS_OK = 0
STATUS_NOT_CONVERGED = 1
STATUS_AVOIDANCE = 2
STATUS_INDEFINITE = 3


def edge_blocks(dt, n):
    f = np.kron(np.array([[1.0, dt], [0.0, 1.0]]), np.eye(n))
    g = np.kron(np.array([[0.5 * dt * dt], [dt]]), np.eye(n))
    return f, g


def _barrier(zq, d, beta, r2, eps):
    """Weights ``beta/(2 sigma(q+d) - r^2)`` and their q-gradients, batched over leading axes."""
    y = zq + d
    s = np.sum(y * y, axis=-1)
    root = np.sqrt(1.0 + eps * s)
    den = 2.0 * (root - 1.0) / eps - r2
    on = beta > 0
    safe = np.where(on, den, 1.0)
    w = np.where(on, beta / safe, 0.0)
    grad = -(beta / (safe * safe))[..., None] * (2.0 * y / root[..., None])
    return w, grad, den


def edge_solve(z0, K, kappa, dt, alpha, beta, alpha_T, beta_T, d, r, eps, R, tol, t_max):
    """Receding-horizon gain iteration for every edge.

    The cost-to-go along the prediction is ``0.5 z^T P z + s^T z``: ``P`` is
    the Riccati matrix of the frozen weights and ``s`` carries the gradient of
    the state-dependent weight, so the costate is ``P z + s``. The control law
    is affine, ``a_j = K_j z_j + kappa_j``; the stopping rule uses the
    Frobenius change of the augmented gain ``[K_j | kappa_j]``.

    Returns ``(K, kappa, P, s, zpred, iterations, delta, status, fail_step)``
    with ``K`` ``(M, T, n, 2n)``, ``kappa`` ``(M, T, n)``, ``P``
    ``(M, T+1, 2n, 2n)``, ``s`` ``(M, T+1, 2n)`` and ``zpred`` the trajectory
    used in the last sweep.
    """
    z0 = np.asarray(z0, dtype=float)
    K = np.array(K, dtype=float)
    kap = np.array(kappa, dtype=float)
    M, T, n, n2 = K.shape
    f, g = edge_blocks(dt, n)
    r2 = r * r
    eye = np.eye(n2)
    P = np.zeros((M, T + 1, n2, n2))
    sv = np.zeros((M, T + 1, n2))
    zp = np.zeros((M, T + 1, n2))
    iters = np.zeros(M, dtype=np.int64)
    delta = np.full(M, np.inf)
    status = np.full(M, STATUS_NOT_CONVERGED, dtype=np.int64)
    fail_step = np.full(M, -1, dtype=np.int64)
    active = np.ones(M, dtype=bool)
    barrier = (beta > 0) | (beta_T > 0)
    for _ in range(t_max):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ka, ka = K[idx], kap[idx]
        za = np.empty((idx.size, T + 1, n2))
        za[:, 0] = z0[idx]
        for j in range(T):
            a = np.einsum("mab,mb->ma", Ka[:, j], za[:, j]) + ka[:, j]
            za[:, j + 1] = za[:, j] @ f.T + a @ g.T
        w, wg, den = _barrier(za[..., :n], d[idx, None, :], beta[idx, None] * np.ones(T + 1), r2, eps)
        wT, wgT, _ = _barrier(za[:, T, :n], d[idx], beta_T[idx], r2, eps)
        bad = barrier[idx, None] & ~(den > 0)
        dead = np.any(bad, axis=1)
        if np.any(dead):
            for local in np.flatnonzero(dead):
                m = idx[local]
                status[m] = STATUS_AVOIDANCE
                fail_step[m] = int(np.argmax(bad[local]))
                active[m] = False
                zp[m] = za[local]
            keep = ~dead
            idx, Ka, ka, za = idx[keep], Ka[keep], ka[keep], za[keep]
            w, wg = w[keep], wg[keep]
            wT, wgT = wT[keep], wgT[keep]
            if idx.size == 0:
                break
        nor = np.sum(za * za, axis=-1)
        coef = dt * (alpha[idx, None] + w)
        h = np.zeros_like(za)
        h[..., :n] = 0.5 * dt * nor[..., None] * wg
        Pa = np.empty((idx.size, T + 1, n2, n2))
        sa = np.empty((idx.size, T + 1, n2))
        Kn = np.empty_like(Ka)
        kn = np.empty_like(ka)
        Pa[:, T] = (dt * (alpha_T[idx] + wT))[:, None, None] * eye
        sa[:, T] = 0.0
        sa[:, T, :n] = 0.5 * dt * nor[:, T, None] * wgT
        failed = np.zeros(idx.size, dtype=bool)
        Ra = R[idx]
        for j in range(T - 1, -1, -1):
            Pn, sn = Pa[:, j + 1], sa[:, j + 1]
            PG = Pn @ g
            S = Ra + np.swapaxes(PG, -1, -2) @ g
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                failed |= np.linalg.eigvalsh(S).min(axis=-1) <= 0
                S = np.where(failed[:, None, None], eye[:n, :n], S)
            Kn[:, j] = -np.linalg.solve(S, np.swapaxes(PG, -1, -2) @ f)
            kn[:, j] = -np.linalg.solve(S, (sn @ g)[..., None])[..., 0]
            Pa[:, j] = f.T @ Pn @ f + (f.T @ PG) @ Kn[:, j] + coef[:, j, None, None] * eye
            sa[:, j] = (np.einsum("mab,mb->ma", PG, kn[:, j]) + sn) @ f + h[:, j]
        diff = np.sum((Kn - Ka) ** 2, axis=(-2, -1)) + np.sum((kn - ka) ** 2, axis=-1)
        dl = np.sqrt(np.max(diff, axis=1))
        for local, m in enumerate(idx):
            iters[m] += 1
            zp[m] = za[local]
            if failed[local]:
                status[m] = STATUS_INDEFINITE
                active[m] = False
                continue
            K[m] = Kn[local]
            kap[m] = kn[local]
            P[m] = Pa[local]
            sv[m] = sa[local]
            delta[m] = dl[local]
            if dl[local] <= tol:
                status[m] = STATUS_OK
                active[m] = False
    return K, kap, P, sv, zp, iters, delta, status, fail_step


def descent_rounds(u, a, src, dst, nbr_ptr, nbr_edge, gamma, l_max, tol):
    """Synchronous neighbor-only descent rounds.

    ``nbr_ptr``/``nbr_edge`` is a CSR list of incident edges per node. Each
    round every node reads its own and its neighbors' previous values only.
    Returns ``(u, residuals, rounds)`` where ``residuals[l]`` is
    ``|Phi u_l - a|`` before round ``l`` (the last entry is after the final round).
    """
    u = np.array(u, dtype=float)
    N = u.shape[0]
    res = [_residual(u, a, src, dst)]
    rounds = 0
    while rounds < l_max and res[-1] > tol:
        new = np.empty_like(u)
        for i in range(N):
            acc = np.zeros(u.shape[1])
            for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
                m = nbr_edge[p]
                if src[m] == i:
                    acc += u[i] - u[dst[m]] - a[m]
                else:
                    acc += u[i] - u[src[m]] + a[m]
            new[i] = u[i] - 2.0 * gamma * acc
        u = new
        rounds += 1
        res.append(_residual(u, a, src, dst))
    return u, np.array(res), rounds


def _residual(u, a, src, dst):
    diff = u[src] - u[dst] - a
    return float(np.sqrt(np.sum(diff * diff)))

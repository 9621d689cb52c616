"""Pure numpy implementation of the light-coherence time march.

Mirrors ``_kernel.pyx`` argument for argument; used when the compiled
extension is unavailable or ``GEMLENS_PURE=1`` is set.
"""
import numpy as np

# amplitude attenuation (natural log) a single cumulative-product block may
# accumulate before 1/P overflows
_MAX_BLOCK_LOSS = 600.0


def phi1(x):
    """(exp(x) - 1) / x, accurate near 0."""
    x = np.asarray(x, dtype=complex)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-5
    xs = x[small]
    out[small] = 1 + xs / 2 + xs * xs / 6 + xs * xs * xs / 24
    xl = x[~small]
    out[~small] = np.expm1(xl) / xl
    return out


class _Sweep:
    """Exact per-cell integration of dA/dz = c (A + rabi S) for frozen S."""

    def __init__(self, kappa, dz, gamma):
        self.kappa = kappa
        self.dz = dz
        self.gamma = gamma
        self.delta = None

    def set_delta(self, delta):
        if delta == self.delta:
            return
        self.delta = delta
        c = 1j * self.kappa / (2 * delta - 1j * self.gamma)
        cd = c * self.dz
        self.E = np.exp(cd)
        self.Em1 = np.expm1(cd)
        self.Q = phi1(cd)
        logp = np.concatenate(([0.0], np.cumsum(cd.real)))
        if -logp[-1] < _MAX_BLOCK_LOSS:
            self.blocks = [(0, self.kappa.size)]
        else:
            self.blocks = []
            start = 0
            for j in range(1, self.kappa.size + 1):
                if logp[start] - logp[j] > _MAX_BLOCK_LOSS or j == self.kappa.size:
                    self.blocks.append((start, j))
                    start = j
        self.P = []
        for a, b in self.blocks:
            self.P.append(np.concatenate(([1.0 + 0j], np.cumprod(self.E[a:b]))))

    def __call__(self, S, a0, rabi):
        """Return (cell-averaged field, field at the exit face)."""
        rs = rabi * S
        F = self.Em1 * rs
        edges = np.empty(S.size + 1, dtype=complex)
        carry = a0
        for (a, b), P in zip(self.blocks, self.P):
            acc = np.cumsum(F[a:b] / P[1:])
            edges[a] = carry
            edges[a + 1:b + 1] = P[1:] * (carry + acc)
            carry = edges[b]
        avg = (edges[:-1] + rs) * self.Q - rs
        # Euler-Maclaurin end correction: the running sum up to a cell centre
        # acts as a trapezoid rule for the field radiated by S
        dS = np.zeros_like(rs)
        dS[1:-1] = rs[2:] - rs[:-2]
        dS[0] = rs[1]
        dS[-1] = -rs[-2]
        return avg - self.Em1 * dS / 24.0, edges[-1]


def march(
    S, z, kappa, dz, h, gamma,
    ain_full, ain_half,
    rabi_full, rabi_half,
    delta_full, delta_half,
    mu_full, mu_q, mu_h,
    beta_full, beta_q, beta_h,
    kick_steps, kick_factors,
    rate_start, rate_end, rate_arrays,
    snap_stride, snaps,
    scheme, out,
):
    """Advance S in place over len(ain_half) steps of size h.

    Returns 0, or 1 when the state became non-finite.
    """
    S_io = S
    S = np.array(S, dtype=complex)
    nsteps = ain_half.shape[0]
    sweep = _Sweep(np.asarray(kappa, float), dz, gamma)
    zz = np.asarray(z, float)
    kicks = {int(k): i for i, k in enumerate(kick_steps)}
    nsnap = 0

    def src(delta, rabi):
        return 1j * rabi / (2 * (2 * delta - 1j * gamma))

    def rate_at(n):
        extra = None
        for r in range(len(rate_start)):
            if rate_start[r] <= n < rate_end[r]:
                extra = rate_arrays[r] if extra is None else extra + rate_arrays[r]
        return extra

    if snap_stride > 0 and snaps.shape[0] > 0:
        snaps[0] = S
        nsnap = 1

    for n in range(nsteps):
        extra = rate_at(n)
        sweep.set_delta(delta_full[n])
        avg0, a_exit = sweep(S, ain_full[n], rabi_full[n])
        out[n] = a_exit
        N0 = src(delta_full[n], rabi_full[n]) * avg0
        if scheme == 0:
            lq = mu_q[n] + 1j * beta_q[n] * zz
            lh = mu_h[n] + 1j * beta_h[n] * zz
            if extra is not None:
                lq = lq + 1j * extra
                lh = lh + 1j * extra
            xq = lq * (h / 2)
            S_half = np.exp(xq) * S + (h / 2) * phi1(xq) * N0
            sweep.set_delta(delta_half[n])
            avgh, _ = sweep(S_half, ain_half[n], rabi_half[n])
            Nh = src(delta_half[n], rabi_half[n]) * avgh
            xh = lh * h
            S = np.exp(xh) * S + h * phi1(xh) * Nh
        else:
            l0 = mu_full[n] + 1j * beta_full[n] * zz
            lh = mu_h[n] + 1j * beta_h[n] * zz
            l1 = mu_full[n + 1] + 1j * beta_full[n + 1] * zz
            if extra is not None:
                l0 = l0 + 1j * extra
                lh = lh + 1j * extra
                l1 = l1 + 1j * extra

            def f(Sv, lam, delta, rabi, a0):
                sweep.set_delta(delta)
                avg, _ = sweep(Sv, a0, rabi)
                return lam * Sv + src(delta, rabi) * avg

            k1 = l0 * S + N0
            k2 = f(S + 0.5 * h * k1, lh, delta_half[n], rabi_half[n], ain_half[n])
            k3 = f(S + 0.5 * h * k2, lh, delta_half[n], rabi_half[n], ain_half[n])
            k4 = f(S + h * k3, l1, delta_full[n + 1], rabi_full[n + 1], ain_full[n + 1])
            S = S + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (n + 1) in kicks:
            S = S * kick_factors[kicks[n + 1]]
        if snap_stride > 0 and (n + 1) % snap_stride == 0 and nsnap < snaps.shape[0]:
            snaps[nsnap] = S
            nsnap += 1
        if (n & 255) == 255 and not np.all(np.isfinite(S)):
            S_io[:] = S
            return 1
    sweep.set_delta(delta_full[nsteps])
    _, a_exit = sweep(S, ain_full[nsteps], rabi_full[nsteps])
    out[nsteps] = a_exit
    S_io[:] = S
    return 0 if np.all(np.isfinite(S)) else 1

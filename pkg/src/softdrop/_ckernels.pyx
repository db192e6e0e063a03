# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: fused encoder + cosine head forward/backward.

Same signatures and semantics as ``_pykernels``, restricted to encoders with
one hidden layer. Inner loops are axpy-shaped (``y[k] += a * x[k]``) so they
vectorize across ``k`` while each output element still accumulates in a
fixed order; results are bit-reproducible run to run. Rows are processed in
blocks so the hidden-layer ``tanh`` runs through NumPy's vectorized ufunc
instead of one libm call per element.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, tanh

cnp.import_array()


cdef inline void _axpy(Py_ssize_t n, double a, const double* x,
                       double* y) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        y[k] += a * x[k]


cdef inline double _dot(Py_ssize_t n, const double* x,
                        const double* y) noexcept nogil:
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(n):
        acc += x[k] * y[k]
    return acc


def matmul(const double[:, ::1] a, const double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], k = a.shape[1], m = b.shape[1]
    cdef Py_ssize_t i, p
    out = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] c = out
    if n == 0 or m == 0 or k == 0:
        return out
    for i in range(n):
        for p in range(k):
            _axpy(m, a[i, p], &b[p, 0], &c[i, 0])
    return out


def softmax_rows(const double[:, ::1] logits):
    cdef Py_ssize_t n = logits.shape[0], M = logits.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, tot
    out = np.empty((n, M), dtype=np.float64)
    cdef double[:, ::1] p = out
    for i in range(n):
        mx = logits[i, 0]
        for j in range(1, M):
            if logits[i, j] > mx:
                mx = logits[i, j]
        tot = 0.0
        for j in range(M):
            p[i, j] = exp(logits[i, j] - mx)
            tot += p[i, j]
        for j in range(M):
            p[i, j] /= tot
    return out


def prob_cross_entropy_rows(const double[:, ::1] p_prev1,
                            const double[:, ::1] p_prev2, double eps):
    cdef Py_ssize_t n = p_prev1.shape[0], M = p_prev1.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, q
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] c = out
    for i in range(n):
        acc = 0.0
        for j in range(M):
            q = p_prev2[i, j]
            if q < eps:
                q = eps
            acc -= p_prev1[i, j] * log(q)
        c[i] = acc
    return out


cdef enum:
    BLOCK = 128


cdef class _Net:
    """Borrowed parameter views plus block scratch buffers."""
    cdef Py_ssize_t din, H, d, M
    cdef double s
    cdef const double[:, ::1] W1T, W2T, WcT, W2, Wc
    cdef const double[::1] b1, b2
    cdef double[::1] wnorm, du, dh, nf
    cdef double[:, ::1] h, f, z
    cdef object h_arr

    def __init__(self, W1, b1, W2, b2, Wc, double s):
        self.H, self.din = W1.shape[0], W1.shape[1]
        self.d, self.M = W2.shape[0], Wc.shape[0]
        self.s = s
        self.W1T = np.ascontiguousarray(W1.T)
        self.W2T = np.ascontiguousarray(W2.T)
        self.WcT = np.ascontiguousarray(Wc.T)
        self.W2 = W2
        self.Wc = Wc
        self.b1 = b1
        self.b2 = b2
        self.wnorm = np.sqrt(np.einsum("ij,ij->i", Wc, Wc))
        self.h_arr = np.empty((BLOCK, self.H))
        self.h = self.h_arr
        self.f = np.empty((BLOCK, self.d))
        self.z = np.empty((BLOCK, self.M))
        self.nf = np.empty(BLOCK)
        self.du = np.empty(self.d)
        self.dh = np.empty(self.H)

    cdef void _pre(self, const double[:, ::1] X, Py_ssize_t i0,
                   Py_ssize_t nb) noexcept nogil:
        cdef Py_ssize_t r, j, k
        cdef double* h
        cdef const double* x
        for r in range(nb):
            h = &self.h[r, 0]
            x = &X[i0 + r, 0]
            for k in range(self.H):
                h[k] = self.b1[k]
            for j in range(self.din):
                _axpy(self.H, x[j], &self.W1T[j, 0], h)

    cdef void _post(self, Py_ssize_t nb) noexcept nogil:
        cdef Py_ssize_t r, j, k
        cdef double* h
        cdef double* f
        cdef double* z
        cdef double nf
        for r in range(nb):
            h = &self.h[r, 0]
            f = &self.f[r, 0]
            z = &self.z[r, 0]
            for k in range(self.d):
                f[k] = self.b2[k]
            for j in range(self.H):
                _axpy(self.d, h[j], &self.W2T[j, 0], f)
            nf = sqrt(_dot(self.d, f, f))
            self.nf[r] = nf
            for j in range(self.M):
                z[j] = 0.0
            for k in range(self.d):
                _axpy(self.M, f[k], &self.WcT[k, 0], z)
            for j in range(self.M):
                z[j] = self.s * z[j] / (nf * self.wnorm[j])

    cdef Py_ssize_t forward_block(self, const double[:, ::1] X, Py_ssize_t i0):
        """Forward rows ``i0 : i0 + nb`` into h, f, nf, z; returns nb."""
        cdef Py_ssize_t nb = min(BLOCK, X.shape[0] - i0)
        self._pre(X, i0, nb)
        np.tanh(self.h_arr[:nb], out=self.h_arr[:nb])
        self._post(nb)
        return nb

    cdef void row_backward(self, Py_ssize_t r, const double* x, const double* g,
                           double* gW1, double* gb1, double* gW2,
                           double* gb2, double* gWc) noexcept nogil:
        # block row r must hold the forward state of x
        cdef Py_ssize_t j, k
        cdef Py_ssize_t H = self.H, d = self.d, din = self.din
        cdef double* h = &self.h[r, 0]
        cdef double* f = &self.f[r, 0]
        cdef double* du = &self.du[0]
        cdef double* dh = &self.dh[0]
        cdef double nf = self.nf[r]
        cdef double gj, cosj, proj, dfk, dak
        for k in range(d):
            du[k] = 0.0
        for j in range(self.M):
            if g[j] == 0.0:
                continue
            gj = self.s * g[j] / self.wnorm[j]
            cosj = self.z[r, j] / self.s
            # d logit_j / d Wc_j = s (f/nf - cos_j Wc_j/|Wc_j|) / |Wc_j|
            _axpy(d, gj / nf, f, &gWc[j * d])
            _axpy(d, -gj * cosj / self.wnorm[j], &self.Wc[j, 0], &gWc[j * d])
            _axpy(d, gj, &self.Wc[j, 0], du)
        proj = _dot(d, du, f) / nf
        for j in range(H):
            dh[j] = 0.0
        for k in range(d):
            dfk = (du[k] - proj * f[k] / nf) / nf
            gb2[k] += dfk
            _axpy(H, dfk, h, &gW2[k * H])
            _axpy(H, dfk, &self.W2[k, 0], dh)
        for j in range(H):
            dak = dh[j] * (1.0 - h[j] * h[j])
            gb1[j] += dak
            _axpy(din, dak, x, &gW1[j * din])


def forward_logits(const double[:, ::1] X, W1, b1, W2, b2, Wc, double s):
    cdef _Net net = _Net(W1, b1, W2, b2, Wc, s)
    cdef Py_ssize_t n = X.shape[0], M = net.M, i0 = 0, nb, r, j
    logits_arr = np.empty((n, M), dtype=np.float64)
    fnorm_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] logits = logits_arr
    cdef double[::1] fnorm = fnorm_arr
    while i0 < n:
        nb = net.forward_block(X, i0)
        for r in range(nb):
            fnorm[i0 + r] = net.nf[r]
            for j in range(M):
                logits[i0 + r, j] = net.z[r, j]
        i0 += nb
    return logits_arr, fnorm_arr


def _grad_buffers(_Net net):
    return (np.zeros((net.H, net.din)), np.zeros(net.H),
            np.zeros((net.d, net.H)), np.zeros(net.d), np.zeros((net.M, net.d)))


def backward(const double[:, ::1] X, W1, b1, W2, b2, Wc, double s,
             const double[:, ::1] G):
    cdef _Net net = _Net(W1, b1, W2, b2, Wc, s)
    cdef Py_ssize_t n = X.shape[0], i0 = 0, nb, r
    bufs = _grad_buffers(net)
    cdef double[:, ::1] gW1 = bufs[0], gW2 = bufs[2], gWc = bufs[4]
    cdef double[::1] gb1 = bufs[1], gb2 = bufs[3]
    while i0 < n:
        nb = net.forward_block(X, i0)
        for r in range(nb):
            net.row_backward(r, &X[i0 + r, 0], &G[i0 + r, 0], &gW1[0, 0],
                             &gb1[0], &gW2[0, 0], &gb2[0], &gWc[0, 0])
        i0 += nb
    return bufs


def smooth_loss_grad(const double[:, ::1] X, W1, b1, W2, b2, Wc, double s,
                     const cnp.int64_t[::1] y, double omega):
    cdef _Net net = _Net(W1, b1, W2, b2, Wc, s)
    cdef Py_ssize_t n = X.shape[0], M = net.M, i0 = 0, nb, r, i, j
    cdef double mx, tot, logZ, qj, acc, off = (1.0 - omega) / (M - 1)
    cdef double inv_n = 1.0 / n
    losses_arr = np.empty(n)
    fnorm_arr = np.empty(n)
    cdef double[::1] losses = losses_arr, fnorm = fnorm_arr
    bufs = _grad_buffers(net)
    cdef double[:, ::1] gW1 = bufs[0], gW2 = bufs[2], gWc = bufs[4]
    cdef double[::1] gb1 = bufs[1], gb2 = bufs[3]
    cdef double[::1] g = np.empty(M)
    cdef double* z
    while i0 < n:
        nb = net.forward_block(X, i0)
        for r in range(nb):
            i = i0 + r
            z = &net.z[r, 0]
            fnorm[i] = net.nf[r]
            mx = z[0]
            for j in range(1, M):
                if z[j] > mx:
                    mx = z[j]
            tot = 0.0
            for j in range(M):
                tot += exp(z[j] - mx)
            logZ = log(tot) + mx
            acc = 0.0
            for j in range(M):
                qj = omega if j == y[i] else off
                acc -= qj * (z[j] - logZ)
                g[j] = (exp(z[j] - logZ) - qj) * inv_n
            losses[i] = acc
            net.row_backward(r, &X[i, 0], &g[0], &gW1[0, 0], &gb1[0],
                             &gW2[0, 0], &gb2[0], &gWc[0, 0])
        i0 += nb
    return (losses_arr,) + bufs + (fnorm_arr,)

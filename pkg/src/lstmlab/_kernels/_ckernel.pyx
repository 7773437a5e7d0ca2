# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fused batch kernels; same contract as ``_pykernel``.

Matrix products go through the BLAS exported by SciPy; the recurrent
elementwise work runs in C loops over preallocated per-step buffers.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"

_PAIRS = (("A", "B"), ("C", "D"), ("E", "F"), ("G", "H"))


cdef inline void gemm(bint ta, bint tb, int m, int n, int k, double alpha,
                      double* a, int lda, double* b, int ldb,
                      double beta, double* c, int ldc) noexcept nogil:
    # row-major c[m x n] = alpha * op(a) @ op(b) + beta * c
    cdef char transa = b'T' if ta else b'N'
    cdef char transb = b'T' if tb else b'N'
    dgemm(&transb, &transa, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef inline double sigm(double x) noexcept nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef class _Run:
    """Buffers for one unrolled batch."""
    cdef public object X, PX, PH, Hs, Cs, Act, TC, U, W, M, N
    cdef int n, steps, e, m
    cdef bint nonlinear, literal


cdef _Run _unroll(cnp.int64_t[:, ::1] tokens, dict arrays, bint nonlinear, bint literal):
    cdef double[:, ::1] emb = np.ascontiguousarray(arrays["embedding"], dtype=np.float64)
    cdef int n = tokens.shape[0]
    cdef int steps = tokens.shape[1]
    cdef int e = emb.shape[1]
    cdef double[:, ::1] U = np.ascontiguousarray(
        np.hstack([arrays["U_i"], arrays["U_f"], arrays["U_o"], arrays["U_g"]]), dtype=np.float64)
    cdef double[:, ::1] W = np.ascontiguousarray(
        np.hstack([arrays["W_i"], arrays["W_f"], arrays["W_o"], arrays["W_g"]]), dtype=np.float64)
    cdef int m = W.shape[0]
    cdef int m4 = 4 * m
    cdef double[:, :, ::1] M
    cdef double[:, :, ::1] N
    if nonlinear:
        M = np.ascontiguousarray(np.stack([arrays[a] for a, _ in _PAIRS]), dtype=np.float64)
        N = np.ascontiguousarray(np.stack([arrays[b] for _, b in _PAIRS]), dtype=np.float64)
    else:
        M = np.zeros((4, 1, 1))
        N = np.zeros((4, 1, 1))

    cdef double[:, :, ::1] X = np.empty((steps, n, e))
    cdef double[:, :, ::1] PX = np.empty((steps, n, m4))
    cdef double[:, :, ::1] PH = np.empty((steps, n, m4))
    cdef double[:, :, ::1] Hs = np.zeros((steps + 1, n, m))
    cdef double[:, :, ::1] Cs = np.zeros((steps + 1, n, m))
    cdef double[:, :, ::1] Act = np.empty((steps, n, m4))
    cdef double[:, :, ::1] TC = np.empty((steps, n, m))
    cdef double[:, ::1] R = np.empty((n, m4))
    cdef double[:, ::1] Z = np.empty((n, m4))
    cdef int t, r, j, k, vocab = emb.shape[0]
    cdef cnp.int64_t tok
    cdef double iv, fv, ov, gv, cv

    for t in range(steps):
        for r in range(n):
            tok = tokens[r, t]
            if tok < 0 or tok >= vocab:
                raise ValueError(f"token id {tok} out of range for vocabulary of size {vocab}")
            for j in range(e):
                X[t, r, j] = emb[tok, j]
    with nogil:
        gemm(False, False, steps * n, m4, e, 1.0, &X[0, 0, 0], e, &U[0, 0], m4, 0.0, &PX[0, 0, 0], m4)
        for t in range(steps):
            gemm(False, False, n, m4, m, 1.0, &Hs[t, 0, 0], m, &W[0, 0], m4, 0.0, &PH[t, 0, 0], m4)
            if nonlinear:
                for r in range(n):
                    for j in range(m4):
                        R[r, j] = PX[t, r, j] if PX[t, r, j] > 0 else 0.0
                for k in range(4):
                    gemm(False, False, n, m, m, 1.0, &R[0, k * m], m4, &M[k, 0, 0], m, 0.0, &Z[0, k * m], m4)
                for r in range(n):
                    for j in range(m4):
                        R[r, j] = PH[t, r, j] if PH[t, r, j] > 0 else 0.0
                for k in range(4):
                    gemm(False, False, n, m, m, 1.0, &R[0, k * m], m4, &N[k, 0, 0], m, 1.0, &Z[0, k * m], m4)
            else:
                for r in range(n):
                    for j in range(m4):
                        Z[r, j] = PX[t, r, j] + PH[t, r, j]
            for r in range(n):
                for j in range(m):
                    iv = sigm(Z[r, j])
                    fv = sigm(Z[r, m + j])
                    ov = sigm(Z[r, 2 * m + j])
                    gv = tanh(Z[r, 3 * m + j])
                    Act[t, r, j] = iv
                    Act[t, r, m + j] = fv
                    Act[t, r, 2 * m + j] = ov
                    Act[t, r, 3 * m + j] = gv
                    cv = fv * Cs[t, r, j] + iv * gv
                    if literal:
                        cv = sigm(cv)
                    Cs[t + 1, r, j] = cv
                    TC[t, r, j] = tanh(cv)
                    Hs[t + 1, r, j] = TC[t, r, j] * ov

    cdef _Run run = _Run()
    run.X, run.PX, run.PH = X.base, PX.base, PH.base
    run.Hs, run.Cs, run.Act, run.TC = Hs.base, Cs.base, Act.base, TC.base
    run.U, run.W, run.M, run.N = U.base, W.base, M.base, N.base
    run.n, run.steps, run.e, run.m = n, steps, e, m
    run.nonlinear, run.literal = nonlinear, literal
    return run


def forward(tokens, arrays, nonlinear=False, literal=False):
    tok = np.ascontiguousarray(tokens, dtype=np.int64)
    run = _unroll(tok, arrays, nonlinear, literal)
    return np.asarray(run.Hs)[-1] @ arrays["V"] + arrays["b"]


def forward_backward(tokens, labels, arrays, nonlinear=False, literal=False):
    """Mean cross-entropy over the batch, logits, and gradients of every array."""
    cdef cnp.int64_t[:, ::1] tok = np.ascontiguousarray(tokens, dtype=np.int64)
    lab = np.asarray(labels, dtype=np.int64)
    cdef _Run run = _unroll(tok, arrays, nonlinear, literal)
    cdef int n = run.n, steps = run.steps, e = run.e, m = run.m
    cdef int m4 = 4 * m
    h_last = np.asarray(run.Hs)[-1]
    logits = h_last @ arrays["V"] + arrays["b"]
    rows = np.arange(n)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[rows, lab].mean()
    dlogits = np.exp(logp)
    dlogits[rows, lab] -= 1.0
    dlogits /= n

    grads = {name: np.zeros_like(v, dtype=np.float64) for name, v in arrays.items()}
    grads["V"] = h_last.T @ dlogits
    grads["b"] = dlogits.sum(axis=0, keepdims=True)

    cdef double[:, :, ::1] X = run.X
    cdef double[:, :, ::1] PX = run.PX
    cdef double[:, :, ::1] PH = run.PH
    cdef double[:, :, ::1] Hs = run.Hs
    cdef double[:, :, ::1] Cs = run.Cs
    cdef double[:, :, ::1] Act = run.Act
    cdef double[:, :, ::1] TC = run.TC
    cdef double[:, ::1] U = run.U
    cdef double[:, ::1] W = run.W
    cdef double[:, :, ::1] M = run.M
    cdef double[:, :, ::1] N = run.N
    cdef bint nonlinear_ = run.nonlinear, literal_ = run.literal

    cdef double[:, ::1] dh = np.ascontiguousarray(dlogits @ arrays["V"].T)
    cdef double[:, ::1] dc = np.zeros((n, m))
    cdef double[:, ::1] dz = np.empty((n, m4))
    cdef double[:, ::1] R = np.empty((n, m4))
    cdef double[:, :, ::1] dPX = np.empty((steps, n, m4))
    cdef double[:, ::1] dPH = np.empty((n, m4))
    cdef double[:, ::1] dW = np.zeros((m, m4))
    cdef double[:, ::1] dU = np.zeros((e, m4))
    cdef double[:, :, ::1] dM = np.zeros((4, m, m))
    cdef double[:, :, ::1] dN = np.zeros((4, m, m))
    cdef double[:, :, ::1] dX = np.empty((steps, n, e))
    cdef int t, r, j, k
    cdef double iv, fv, ov, gv, cv, tc, dcv, dov

    with nogil:
        for t in range(steps - 1, -1, -1):
            for r in range(n):
                for j in range(m):
                    iv = Act[t, r, j]
                    fv = Act[t, r, m + j]
                    ov = Act[t, r, 2 * m + j]
                    gv = Act[t, r, 3 * m + j]
                    cv = Cs[t + 1, r, j]
                    tc = TC[t, r, j]
                    dov = dh[r, j] * tc
                    dcv = dc[r, j] + dh[r, j] * ov * (1.0 - tc * tc)
                    if literal_:
                        dcv = dcv * cv * (1.0 - cv)
                    dz[r, j] = dcv * gv * iv * (1.0 - iv)
                    dz[r, m + j] = dcv * Cs[t, r, j] * fv * (1.0 - fv)
                    dz[r, 2 * m + j] = dov * ov * (1.0 - ov)
                    dz[r, 3 * m + j] = dcv * iv * (1.0 - gv * gv)
                    dc[r, j] = dcv * fv
            if nonlinear_:
                for r in range(n):
                    for j in range(m4):
                        R[r, j] = PX[t, r, j] if PX[t, r, j] > 0 else 0.0
                for k in range(4):
                    gemm(True, False, m, m, n, 1.0, &R[0, k * m], m4, &dz[0, k * m], m4, 1.0, &dM[k, 0, 0], m)
                    gemm(False, True, n, m, m, 1.0, &dz[0, k * m], m4, &M[k, 0, 0], m, 0.0, &dPX[t, 0, k * m], m4)
                for r in range(n):
                    for j in range(m4):
                        R[r, j] = PH[t, r, j] if PH[t, r, j] > 0 else 0.0
                for k in range(4):
                    gemm(True, False, m, m, n, 1.0, &R[0, k * m], m4, &dz[0, k * m], m4, 1.0, &dN[k, 0, 0], m)
                    gemm(False, True, n, m, m, 1.0, &dz[0, k * m], m4, &N[k, 0, 0], m, 0.0, &dPH[0, k * m], m4)
                for r in range(n):
                    for j in range(m4):
                        if PX[t, r, j] <= 0:
                            dPX[t, r, j] = 0.0
                        if PH[t, r, j] <= 0:
                            dPH[r, j] = 0.0
            else:
                for r in range(n):
                    for j in range(m4):
                        dPX[t, r, j] = dz[r, j]
                        dPH[r, j] = dz[r, j]
            gemm(True, False, m, m4, n, 1.0, &Hs[t, 0, 0], m, &dPH[0, 0], m4, 1.0, &dW[0, 0], m4)
            gemm(False, True, n, m, m4, 1.0, &dPH[0, 0], m4, &W[0, 0], m4, 0.0, &dh[0, 0], m)
        gemm(True, False, e, m4, steps * n, 1.0, &X[0, 0, 0], e, &dPX[0, 0, 0], m4, 0.0, &dU[0, 0], m4)
        gemm(False, True, steps * n, e, m4, 1.0, &dPX[0, 0, 0], m4, &U[0, 0], m4, 0.0, &dX[0, 0, 0], e)

    cdef double[:, ::1] dEmb = grads["embedding"]
    with nogil:
        for t in range(steps - 1, -1, -1):
            for r in range(n):
                for j in range(e):
                    dEmb[tok[r, t], j] += dX[t, r, j]

    dU_arr = np.asarray(dU)
    dW_arr = np.asarray(dW)
    for k, gate in enumerate("ifog"):
        grads["U_" + gate] = dU_arr[:, k * m:(k + 1) * m].copy()
        grads["W_" + gate] = dW_arr[:, k * m:(k + 1) * m].copy()
    if nonlinear_:
        for k, (a, b) in enumerate(_PAIRS):
            grads[a] = np.asarray(dM[k]).copy()
            grads[b] = np.asarray(dN[k]).copy()
    return float(loss), logits, grads

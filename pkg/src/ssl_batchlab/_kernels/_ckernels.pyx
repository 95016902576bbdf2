# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-network kernels.

Same contracts as ``_pykernels``; matrix products go straight to BLAS
through scipy's Cython bindings so a training step makes no per-layer
Python round trips.  Row-major arrays are handed to Fortran BLAS as
their column-major transposes.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _gemm(char ta, char tb, int m, int n, int k, double alpha,
                double* a, int lda, double* b, int ldb, double beta,
                double* c, int ldc) noexcept nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, a, &lda, b, &ldb, &beta, c, &ldc)


def mlp_forward(const double[::1] flat, layer_dims, const double[:, ::1] X):
    cdef int n = X.shape[0]
    cdef int nl = len(layer_dims) - 1
    cdef int i, r, j, n_in, n_out
    cdef Py_ssize_t offset = 0
    cdef const double[:, ::1] h = X
    cdef double[:, ::1] z
    cdef const double* bias
    acts = [np.asarray(X)]
    for i in range(nl):
        n_in = layer_dims[i]
        n_out = layer_dims[i + 1]
        if h.shape[1] != n_in:
            raise ValueError("input width does not match layer dims")
        out = np.empty((n, n_out), dtype=np.float64)
        z = out
        bias = &flat[offset + n_in * n_out]
        with nogil:
            for r in range(n):
                for j in range(n_out):
                    z[r, j] = bias[j]
            if n > 0:
                _gemm(b'N', b'N', n_out, n, n_in, 1.0, <double*>&flat[offset], n_out,
                      <double*>&h[0, 0], n_in, 1.0, &z[0, 0], n_out)
            if i < nl - 1:
                for r in range(n):
                    for j in range(n_out):
                        if z[r, j] < 0.0:
                            z[r, j] = 0.0
        offset += n_in * n_out + n_out
        acts.append(out)
        h = z
    return acts


def mlp_backward(const double[::1] flat, layer_dims, acts, const double[:, ::1] dlogits,
                 double[::1] grad):
    cdef int nl = len(layer_dims) - 1
    cdef int n = dlogits.shape[0]
    cdef int i, r, j, n_in, n_out
    cdef Py_ssize_t o
    cdef const double[:, ::1] dz = dlogits
    cdef const double[:, ::1] a
    cdef double[:, ::1] da
    cdef double* gb
    offsets = []
    o = 0
    for i in range(nl):
        offsets.append(o)
        o += layer_dims[i] * layer_dims[i + 1] + layer_dims[i + 1]
    for i in range(nl - 1, -1, -1):
        n_in = layer_dims[i]
        n_out = layer_dims[i + 1]
        o = offsets[i]
        a = acts[i]
        gb = &grad[o + n_in * n_out]
        if n == 0:
            break
        with nogil:
            _gemm(b'N', b'T', n_out, n_in, n, 1.0, <double*>&dz[0, 0], n_out,
                  <double*>&a[0, 0], n_in, 1.0, &grad[o], n_out)
            for r in range(n):
                for j in range(n_out):
                    gb[j] += dz[r, j]
        if i > 0:
            buf = np.empty((n, n_in), dtype=np.float64)
            da = buf
            with nogil:
                _gemm(b'T', b'N', n_in, n, n_out, 1.0, <double*>&flat[o], n_out,
                      <double*>&dz[0, 0], n_out, 0.0, &da[0, 0], n_in)
                for r in range(n):
                    for j in range(n_in):
                        if a[r, j] <= 0.0:
                            da[r, j] = 0.0
            dz = da
    return np.asarray(grad)


def softmax_xent(const double[:, ::1] logits, const cnp.int64_t[::1] targets,
                 const double[::1] weights):
    cdef int n = logits.shape[0]
    cdef int c = logits.shape[1]
    cdef int r, j
    cdef double m, s, loss = 0.0
    out = np.empty((n, c), dtype=np.float64)
    ce_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] d = out
    cdef double[::1] ce = ce_arr
    with nogil:
        for r in range(n):
            m = logits[r, 0]
            for j in range(1, c):
                if logits[r, j] > m:
                    m = logits[r, j]
            s = 0.0
            for j in range(c):
                d[r, j] = exp(logits[r, j] - m)
                s += d[r, j]
            ce[r] = log(s) - (logits[r, targets[r]] - m)
            loss += weights[r] * ce[r]
            for j in range(c):
                d[r, j] = d[r, j] / s * weights[r]
            d[r, targets[r]] -= weights[r]
    return loss, out, ce_arr


def softmax_confidence(const double[:, ::1] logits):
    cdef int n = logits.shape[0]
    cdef int c = logits.shape[1]
    cdef int r, j, best
    cdef double m, s
    arg_arr = np.empty(n, dtype=np.int64)
    conf_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] arg = arg_arr
    cdef double[::1] conf = conf_arr
    with nogil:
        for r in range(n):
            best = 0
            m = logits[r, 0]
            for j in range(1, c):
                if logits[r, j] > m:
                    m = logits[r, j]
                    best = j
            s = 0.0
            for j in range(c):
                s += exp(logits[r, j] - m)
            arg[r] = best
            conf[r] = 1.0 / s
    return arg_arr, conf_arr

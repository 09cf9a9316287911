# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: hard plug-in CMI and the soft CMI value/gradient.

These mirror the pure-numpy implementations in ``fairfront.estimators``;
the test suite checks both paths agree to float accumulation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log

cnp.import_array()


def hard_cmi(const cnp.int64_t[::1] u, const cnp.int64_t[::1] y, const cnp.int64_t[::1] z,
             Py_ssize_t ku, Py_ssize_t ky, Py_ssize_t kz):
    """Stratified plug-in estimate of I(U;Z|Y) from index samples, in nats."""
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, yy, a, b
    cdef double total = 0.0

    counts_arr = np.zeros((ky, ku, kz), dtype=np.float64)
    ny_arr = np.zeros(ky, dtype=np.float64)
    cdef double[:, :, ::1] counts = counts_arr
    cdef double[::1] ny = ny_arr

    for i in range(n):
        counts[y[i], u[i], z[i]] += 1.0
        ny[y[i]] += 1.0

    pu_arr = np.zeros(ku, dtype=np.float64)
    pz_arr = np.zeros(kz, dtype=np.float64)
    cdef double[::1] pu = pu_arr
    cdef double[::1] pz = pz_arr
    cdef double stratum, c, denom

    for yy in range(ky):
        if ny[yy] == 0.0:
            continue
        denom = ny[yy]
        for a in range(ku):
            pu[a] = 0.0
            for b in range(kz):
                pu[a] += counts[yy, a, b]
        for b in range(kz):
            pz[b] = 0.0
            for a in range(ku):
                pz[b] += counts[yy, a, b]
        stratum = 0.0
        for a in range(ku):
            for b in range(kz):
                c = counts[yy, a, b]
                if c > 0.0:
                    stratum += c * log(c * denom / (pu[a] * pz[b]))
        # c already carries the stratum counts, so dividing by n yields the
        # (ny/n) * I_y weighting in one step
        total += stratum / n
    if total < 0.0:
        total = 0.0
    return total


def soft_cmi(const double[:, ::1] p, const cnp.int64_t[::1] y, const cnp.int64_t[::1] z,
             Py_ssize_t ky, Py_ssize_t kz, bint want_grad):
    """Soft plug-in CMI over posterior rows; optional gradient wrt each row.

    The gradient of the estimator with respect to a sample's posterior is
    ln(m_yz / m_y) / B componentwise, shared by all rows in the same (y, z)
    cell; boundary components with m_yz == 0 are clamped to 0.
    """
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t k = p.shape[1]
    cdef Py_ssize_t i, j, yy, zz

    sums_arr = np.zeros((ky, kz, k), dtype=np.float64)
    cnt_arr = np.zeros((ky, kz), dtype=np.float64)
    cdef double[:, :, ::1] sums = sums_arr
    cdef double[:, ::1] cnt = cnt_arr

    for i in range(n):
        yy = y[i]
        zz = z[i]
        cnt[yy, zz] += 1.0
        for j in range(k):
            sums[yy, zz, j] += p[i, j]

    # per-(y,z) cell gradient rows, scattered back to samples at the end
    cell_grad_arr = np.zeros((ky, kz, k), dtype=np.float64)
    cdef double[:, :, ::1] cell_grad = cell_grad_arr
    my_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] my = my_arr

    cdef double value = 0.0
    cdef double nyy, myz, ratio
    for yy in range(ky):
        nyy = 0.0
        for zz in range(kz):
            nyy += cnt[yy, zz]
        if nyy == 0.0:
            continue
        for j in range(k):
            my[j] = 0.0
            for zz in range(kz):
                my[j] += sums[yy, zz, j]
            my[j] /= nyy
        for zz in range(kz):
            if cnt[yy, zz] == 0.0:
                continue
            for j in range(k):
                myz = sums[yy, zz, j] / cnt[yy, zz]
                if myz > 0.0 and my[j] > 0.0:
                    ratio = log(myz / my[j])
                    value += cnt[yy, zz] * myz * ratio / n
                    if want_grad:
                        cell_grad[yy, zz, j] = ratio / n

    if value < 0.0:
        value = 0.0
    if not want_grad:
        return value, None

    grad_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] grad = grad_arr
    for i in range(n):
        yy = y[i]
        zz = z[i]
        for j in range(k):
            grad[i, j] = cell_grad[yy, zz, j]
    return value, grad_arr

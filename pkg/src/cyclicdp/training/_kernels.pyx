# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the toy training engine.

Must stay operation-for-operation identical to `_kernels_py`: same loop
nesting, same accumulation order, same libm calls, so both backends produce
bit-identical float64 results.
"""

from libc.math cimport exp, log, tanh

import numpy as np

NAME = "compiled"


def _stage_offsets(dims):
    offsets = [0]
    total = 0
    for j in range(len(dims) - 1):
        total += dims[j] * dims[j + 1] + dims[j + 1]
        offsets.append(total)
    return offsets


def mlp_value_grad(dims, theta, x, y, labels, int loss_kind):
    cdef int n_stages = len(dims) - 1
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef int batch = xv.shape[0]
    offsets = _stage_offsets(dims)
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    grad_arr = np.zeros(th.shape[0], dtype=np.float64)
    cdef double[::1] grad = grad_arr

    cdef int j, s, o, k, din, dout, base, bias, lab
    cdef double acc, d, m, se, e, loss

    hs = [np.ascontiguousarray(x, dtype=np.float64)]
    cdef double[:, ::1] hin, hout
    z_arr = None
    for j in range(n_stages):
        din = dims[j]
        dout = dims[j + 1]
        base = offsets[j]
        bias = base + din * dout
        hin = hs[j]
        out_arr = np.empty((batch, dout), dtype=np.float64)
        hout = out_arr
        for s in range(batch):
            for o in range(dout):
                acc = th[bias + o]
                for k in range(din):
                    acc += hin[s, k] * th[base + k * dout + o]
                hout[s, o] = acc
        if j < n_stages - 1:
            act_arr = np.empty((batch, dout), dtype=np.float64)
            hin = act_arr
            for s in range(batch):
                for o in range(dout):
                    hin[s, o] = tanh(hout[s, o])
            hs.append(act_arr)
        else:
            z_arr = out_arr

    dout = dims[n_stages]
    dz_arr = np.zeros((batch, dout), dtype=np.float64)
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] zl = z_arr
    cdef double[:, ::1] yv
    cdef long[::1] labv
    cdef double[::1] p
    loss = 0.0
    if loss_kind == 0:
        yv = np.ascontiguousarray(y, dtype=np.float64)
        for s in range(batch):
            for o in range(dout):
                d = zl[s, o] - yv[s, o]
                loss += d * d
                dz[s, o] = d / batch
        loss = loss / (2.0 * batch)
    else:
        labv = np.ascontiguousarray(labels, dtype=np.int64)
        p_arr = np.empty(dout, dtype=np.float64)
        p = p_arr
        for s in range(batch):
            lab = labv[s]
            m = zl[s, 0]
            for o in range(1, dout):
                if zl[s, o] > m:
                    m = zl[s, o]
            se = 0.0
            for o in range(dout):
                e = exp(zl[s, o] - m)
                p[o] = e
                se += e
            for o in range(dout):
                p[o] = p[o] / se
            loss += -log(p[lab])
            for o in range(dout):
                dz[s, o] = (p[o] - (1.0 if o == lab else 0.0)) / batch
        loss = loss / batch

    cdef double[:, ::1] prev
    for j in range(n_stages - 1, -1, -1):
        din = dims[j]
        dout = dims[j + 1]
        base = offsets[j]
        bias = base + din * dout
        hin = hs[j]
        for k in range(din):
            for o in range(dout):
                acc = 0.0
                for s in range(batch):
                    acc += hin[s, k] * dz[s, o]
                grad[base + k * dout + o] = acc
        for o in range(dout):
            acc = 0.0
            for s in range(batch):
                acc += dz[s, o]
            grad[bias + o] = acc
        if j > 0:
            prev_arr = np.zeros((batch, din), dtype=np.float64)
            prev = prev_arr
            for s in range(batch):
                for k in range(din):
                    acc = 0.0
                    for o in range(dout):
                        acc += dz[s, o] * th[base + k * dout + o]
                    prev[s, k] = acc * (1.0 - hin[s, k] * hin[s, k])
            dz_arr = prev_arr
            dz = dz_arr

    return loss, grad_arr


def quad_value_grad(a, theta, targets):
    cdef double[:, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[:, ::1] ts = np.ascontiguousarray(targets, dtype=np.float64)
    cdef int m = av.shape[0]
    cdef int p_dim = av.shape[1]
    cdef int batch = ts.shape[0]

    cdef int s, row, p
    cdef double acc, r, loss, scale

    z_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] z = z_arr
    for row in range(m):
        acc = 0.0
        for p in range(p_dim):
            acc += av[row, p] * th[p]
        z[row] = acc

    rsum_arr = np.zeros(m, dtype=np.float64)
    cdef double[::1] rsum = rsum_arr
    loss = 0.0
    for s in range(batch):
        for row in range(m):
            r = z[row] - ts[s, row]
            loss += r * r
            rsum[row] += r
    loss = loss / (2.0 * m * batch)

    grad_arr = np.zeros(p_dim, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    scale = 1.0 / (m * batch)
    for p in range(p_dim):
        acc = 0.0
        for row in range(m):
            acc += av[row, p] * rsum[row]
        grad[p] = acc * scale
    return loss, grad_arr

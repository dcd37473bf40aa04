"""Pure-Python twins of the compiled kernels.

Operation order is part of the contract: accumulations run over samples,
rows, and columns in ascending index order, exactly as in the compiled
version, so the two backends produce bit-identical float64 results.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"


def _stage_offsets(dims):
    offsets = [0]
    for j in range(len(dims) - 1):
        offsets.append(offsets[-1] + dims[j] * dims[j + 1] + dims[j + 1])
    return offsets


def mlp_value_grad(dims, theta, x, y, labels, loss_kind):
    """Loss and flat gradient of a stage-stacked tanh MLP on one batch.

    dims[j] is the width entering stage j; the last stage is affine.
    loss_kind 0 is mean squared error against y, 1 is softmax cross-entropy
    against integer labels.
    """
    n_stages = len(dims) - 1
    batch = x.shape[0]
    offsets = _stage_offsets(dims)
    th = theta.tolist()
    grad = [0.0] * len(th)

    hs = [[list(row) for row in x.tolist()]]
    z_last = None
    for j in range(n_stages):
        din, dout = dims[j], dims[j + 1]
        base = offsets[j]
        bias = base + din * dout
        hin = hs[j]
        out = [[0.0] * dout for _ in range(batch)]
        for s in range(batch):
            row = hin[s]
            for o in range(dout):
                acc = th[bias + o]
                for k in range(din):
                    acc += row[k] * th[base + k * dout + o]
                out[s][o] = acc
        if j < n_stages - 1:
            hs.append([[math.tanh(v) for v in row] for row in out])
        else:
            z_last = out

    dout = dims[n_stages]
    dz = [[0.0] * dout for _ in range(batch)]
    loss = 0.0
    if loss_kind == 0:
        ys = y.tolist()
        for s in range(batch):
            for o in range(dout):
                d = z_last[s][o] - ys[s][o]
                loss += d * d
                dz[s][o] = d / batch
        loss = loss / (2.0 * batch)
    else:
        labs = labels.tolist()
        for s in range(batch):
            m = z_last[s][0]
            for o in range(1, dout):
                if z_last[s][o] > m:
                    m = z_last[s][o]
            se = 0.0
            p = [0.0] * dout
            for o in range(dout):
                e = math.exp(z_last[s][o] - m)
                p[o] = e
                se += e
            for o in range(dout):
                p[o] = p[o] / se
            loss += -math.log(p[labs[s]])
            for o in range(dout):
                dz[s][o] = (p[o] - (1.0 if o == labs[s] else 0.0)) / batch
        loss = loss / batch

    for j in range(n_stages - 1, -1, -1):
        din, dout = dims[j], dims[j + 1]
        base = offsets[j]
        bias = base + din * dout
        hin = hs[j]
        for k in range(din):
            for o in range(dout):
                acc = 0.0
                for s in range(batch):
                    acc += hin[s][k] * dz[s][o]
                grad[base + k * dout + o] = acc
        for o in range(dout):
            acc = 0.0
            for s in range(batch):
                acc += dz[s][o]
            grad[bias + o] = acc
        if j > 0:
            prev = [[0.0] * din for _ in range(batch)]
            for s in range(batch):
                for k in range(din):
                    acc = 0.0
                    for o in range(dout):
                        acc += dz[s][o] * th[base + k * dout + o]
                    prev[s][k] = acc * (1.0 - hin[s][k] * hin[s][k])
            dz = prev

    return loss, np.asarray(grad, dtype=np.float64)


def quad_value_grad(a, theta, targets):
    """Loss and gradient of the coupled quadratic 0.5*|A theta - t|^2,
    averaged over the batch of targets and the output rows."""
    m, p_dim = a.shape
    batch = targets.shape[0]
    al = a.tolist()
    th = theta.tolist()
    ts = targets.tolist()

    z = [0.0] * m
    for row in range(m):
        acc = 0.0
        arow = al[row]
        for p in range(p_dim):
            acc += arow[p] * th[p]
        z[row] = acc

    loss = 0.0
    rsum = [0.0] * m
    for s in range(batch):
        trow = ts[s]
        for row in range(m):
            r = z[row] - trow[row]
            loss += r * r
            rsum[row] += r
    loss = loss / (2.0 * m * batch)

    grad = [0.0] * p_dim
    scale = 1.0 / (m * batch)
    for p in range(p_dim):
        acc = 0.0
        for row in range(m):
            acc += al[row][p] * rsum[row]
        grad[p] = acc * scale
    return loss, np.asarray(grad, dtype=np.float64)

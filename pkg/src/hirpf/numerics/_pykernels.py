"""Pure-numpy reference kernels.

Each function mirrors a routine in ``_ckernels.pyx`` with the same signature
and the same output dtype as its inputs. The compiled versions fuse the
passes that numpy has to spell out as separate array expressions.
"""

import numpy as np

GELU_C = float(np.sqrt(2.0 / np.pi))


def layer_norm_fwd(x, gain, bias, eps):
    # x: (N, d) contiguous
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    var = (xc * xc).mean(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    y = xhat * gain + bias
    return y, xhat, rstd[:, 0]


def layer_norm_bwd(dy, xhat, rstd, gain):
    d = xhat.shape[1]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    g = dy * gain
    dx = (g - g.mean(axis=1, keepdims=True)
          - xhat * (g * xhat).sum(axis=1, keepdims=True) / d) * rstd[:, None]
    return dx, dgain, dbias


def causal_softmax_fwd(s):
    # s: (N, T, T); entries above the diagonal are ignored and come out as 0
    T = s.shape[-1]
    upper = np.triu(np.ones((T, T), dtype=bool), k=1)
    z = np.where(upper, -np.inf, s)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def causal_softmax_bwd(dp, p):
    return p * (dp - (dp * p).sum(axis=-1, keepdims=True))


def xent_fwd(logits, targets):
    # logits: (N, V); returns per-row nll and softmax probabilities
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    e = np.exp(z)
    s = e.sum(axis=1, keepdims=True)
    probs = e / s
    nll = np.log(s[:, 0]) - z[np.arange(len(targets)), targets]
    return nll, probs


def xent_bwd(probs, targets, row_weight):
    g = probs * row_weight[:, None]
    g[np.arange(len(targets)), targets] -= row_weight
    return g


def gelu_fwd(x):
    u = GELU_C * (x + 0.044715 * x ** 3)
    t = np.tanh(u)
    return 0.5 * x * (1.0 + t), t


def gelu_bwd(dy, x, t):
    du = GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)

"""Independent reference computations used by the unit and acceptance tests."""

import numpy as np

from rrmar.tensor import kron, unfold


def coefficient_tensor(factors, core):
    u1, u2, u3, u4 = factors
    return np.einsum("jklmi,aj,bk,cl,dm->abcdi", core, u1, u2, u3, u4)


def lagged(values, p):
    t = values.shape[2]
    return np.stack([values[:, :, p - i - 1:t - i - 1] for i in range(p)], axis=2)


def loss(factors, core, values):
    """(1 / 2T') sum_t ||Y_t - sum_i A_i . Y_{t-i}||_F^2 by direct summation."""
    p = core.shape[-1]
    a = coefficient_tensor(factors, core)
    fitted = np.einsum("abcdi,cdit->abt", a, lagged(values, p))
    resid = values[:, :, p:] - fitted
    return 0.5 * np.sum(resid ** 2) / resid.shape[2]


def numeric_gradients(factors, core, values, h=1e-6):
    """Central finite differences of :func:`loss` for every parameter block."""
    blocks = [np.array(u, dtype=float) for u in factors] + [np.array(core, dtype=float)]
    grads = []
    for b in range(5):
        g = np.zeros_like(blocks[b])
        for idx in np.ndindex(blocks[b].shape):
            plus = [x.copy() for x in blocks]
            minus = [x.copy() for x in blocks]
            plus[b][idx] += h
            minus[b][idx] -= h
            g[idx] = (loss(plus[:4], plus[4], values) - loss(minus[:4], minus[4], values)) / (2 * h)
        grads.append(g)
    return dict(zip(("U1", "U2", "U3", "U4", "core"), grads))


def literal_gradients(factors, core, values):
    """Unfolding / Kronecker gradient formulas evaluated verbatim."""
    u1, u2, u3, u4 = factors
    p = core.shape[-1]
    a = coefficient_tensor(factors, core)
    x = lagged(values, p)
    resid = np.einsum("abcdi,cdit->abt", a, x) - values[:, :, p:]
    m = np.einsum("abt,cdit->abcdi", resid, x) / resid.shape[2]
    ip = np.eye(p)
    return {
        "U1": unfold(m, 0) @ kron(ip, u4, u3, u2) @ unfold(core, 0).T,
        "U2": unfold(m, 1) @ kron(ip, u4, u3, u1) @ unfold(core, 1).T,
        "U3": unfold(m, 2) @ kron(ip, u4, u2, u1) @ unfold(core, 2).T,
        "U4": unfold(m, 3) @ kron(ip, u3, u2, u1) @ unfold(core, 3).T,
        "core": np.einsum("abcdi,aj,bk,cl,dm->jklmi", m, u1, u2, u3, u4),
    }


def max_relative_error(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


def ols_var(values, p):
    """Least-squares VAR(p) without intercept via statsmodels, stacked N x Np."""
    from statsmodels.tsa.api import VAR

    n1, n2, t = values.shape
    data = values.reshape(n1 * n2, t, order="F").T
    res = VAR(data).fit(p, trend="n")
    return np.hstack(list(res.coefs))

"""Slow, direct reference implementations used as test oracles.

None of these share code with the library beyond plain table access.
"""

import itertools
import math

import numpy as np


def naive_relabel(G, C, S, room_prior=None):
    """Decision-rule posteriors by explicit loops in linear space.

    G[r, y] = p(y | r), C[y, d] = p(d | y), S[i, d] = p_seg(d | x_i).
    p(r | y) and p(y | d) come from column normalization (uniform marginals).
    """
    R, O = G.shape
    n = S.shape[0]
    pr = [1.0 / R] * R if room_prior is None else list(room_prior)

    def r_given_y(r, y):
        col = sum(G[rr][y] for rr in range(R))
        return G[r][y] / col if col > 0 else 1.0 / R

    def y_given_d(y, d):
        col = sum(C[yy][d] for yy in range(O))
        return C[y][d] / col if col > 0 else 1.0 / O

    def floor(v):
        return max(v, 1e-12)

    out = np.zeros((n, O))
    for i in range(n):
        dstar = max(range(O), key=lambda d: (S[i][d], -d))
        for y in range(O):
            total = 0.0
            for r in range(R):
                prod = 1.0
                for j in range(n):
                    inner = 0.0
                    for yj in range(O):
                        inner += floor(r_given_y(r, yj)) * floor(S[j][yj]) / floor(pr[r])
                    prod *= inner
                total += floor(pr[r]) * floor(G[r][y]) * prod
            out[i, y] = floor(y_given_d(y, dstar)) * floor(S[i][dstar]) * total
        out[i] /= out[i].sum()
    return out


def exhaustive_viterbi(initial, theta, eta, obs):
    """Best label sequence by scoring every sequence; ties keep the lexicographically first."""
    n_states = len(initial)
    best, best_path = -math.inf, None
    for path in itertools.product(range(n_states), repeat=len(obs)):
        lp = math.log(max(initial[path[0]], 1e-12)) + math.log(max(eta[path[0]][obs[0]], 1e-12))
        for t in range(1, len(obs)):
            lp += math.log(max(theta[path[t - 1]][path[t]], 1e-12))
            lp += math.log(max(eta[path[t]][obs[t]], 1e-12))
        if lp > best + 1e-12:
            best, best_path = lp, path
    return list(best_path)


def grid_map_row(alpha_row, counts_row, step=1e-3):
    """Maximize sum_k (alpha_k - 1 + c_k) log theta_k over a grid on the 2-simplex.

    The objective is the log Dirichlet density plus the transition
    log-likelihood for one source action with three successors.
    """
    w = np.asarray(alpha_row, float) - 1.0 + np.asarray(counts_row, float)
    m = int(round(1 / step))
    a = np.arange(1, m) * step
    best, arg = -np.inf, None
    for t0 in a:
        t1 = a[a < 1 - t0 - step / 2]
        if t1.size == 0:
            continue
        t2 = 1 - t0 - t1
        val = w[0] * np.log(t0) + w[1] * np.log(t1) + w[2] * np.log(t2)
        k = int(np.argmax(val))
        if val[k] > best:
            best, arg = val[k], (t0, t1[k], t2[k])
    return np.array(arg)

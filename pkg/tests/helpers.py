"""Shared statistical helpers for the test-suite."""

import numpy as np
from scipy import stats


def chi2_pvalue(counts, probs, n):
    expected = probs * n
    # pool sparse cells so every expected count is at least 5
    order = np.argsort(expected)
    obs_b, exp_b, acc_o, acc_e = [], [], 0.0, 0.0
    for i in order:
        acc_o += counts[i]
        acc_e += expected[i]
        if acc_e >= 5:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_b[-1] += acc_o
        exp_b[-1] += acc_e
    return stats.chisquare(obs_b, exp_b).pvalue

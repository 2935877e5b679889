"""Slow, obviously-correct reference implementations used as test oracles."""

import itertools

import numpy as np


def naive_soca_mask(img, train, guard, k):
    """Pixel-by-pixel SOCA-CFAR: slice each of the four training strips and average.

    Strips cut short by the image border average over the cells that exist;
    strips with no cells are ignored.
    """
    nr, na = img.shape
    out = np.zeros_like(img, dtype=bool)
    for i in range(nr):
        for j in range(na):
            strips = [
                img[max(i - guard - train, 0):max(i - guard, 0), j],
                img[i + guard + 1:i + guard + train + 1, j],
                img[i, max(j - guard - train, 0):max(j - guard, 0)],
                img[i, j + guard + 1:j + guard + train + 1],
            ]
            noise = min(s.mean() for s in strips if s.size)
            out[i, j] = img[i, j] > k * noise
    return out


def brute_assignment_cost(costs):
    """Minimum total cost over every one-to-one matching of the smaller side."""
    costs = np.asarray(costs, dtype=float)
    if costs.shape[0] > costs.shape[1]:
        costs = costs.T
    n, m = costs.shape
    rows = np.arange(n)
    return min(costs[rows, list(cols)].sum() for cols in itertools.permutations(range(m), n))


def sequential_posterior(z_centers, measurements, sigma, floor=0.0):
    """Multiply per-measurement likelihood histograms one at a time in linear space.

    The Gaussian is peak-normalized, so ``floor`` is a fraction of its peak.
    """
    p = np.full(len(z_centers), 1.0 / len(z_centers))
    for z in measurements:
        lik = np.exp(-0.5 * ((z_centers - z) / sigma) ** 2) + floor
        p = p * lik
        p /= p.sum()
    return p

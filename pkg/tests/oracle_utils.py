"""Shared brute-force oracles for the test suite.

The small-instance oracle enumerates the joint posterior of a 2-subcarrier
single-antenna instance on discretized grids for the continuous blocks, so
Gibbs marginals can be checked against exact (up to discretization)
probabilities. Everything here is deliberately written from the model
densities directly, independent of the sampler implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from modclass.gibbs import CandidateSet
from modclass.sigmodel import Constellation, ModulationPool


@dataclass
class GridSpec:
    p_edges: np.ndarray       # mixture-weight grid (first component), len P+1
    s2_edges: np.ndarray      # noise-variance grid, len S+1
    h_edges: np.ndarray       # shared Re/Im grid for the scalar channel, len H+1

    @staticmethod
    def centers(edges: np.ndarray) -> np.ndarray:
        return 0.5 * (edges[:-1] + edges[1:])

    @staticmethod
    def widths(edges: np.ndarray) -> np.ndarray:
        return np.diff(edges)


def two_point_pool() -> ModulationPool:
    """A 2-point unit-power alphabet plus QPSK."""
    bpsk = Constellation(name="BIN2", points=np.array([1.0 + 0j, -1.0 + 0j]))
    qpsk_pts = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)
    return ModulationPool((bpsk, Constellation(name="QPSK", points=qpsk_pts)))


def brute_force_grid_posterior(y: np.ndarray, pool: ModulationPool, grid: GridSpec,
                               gamma: np.ndarray, alpha0: float, beta0: float,
                               alpha_h: float):
    """Tabulate the joint posterior over (symbol pair, p, sigma2, h) cells.

    y has shape (2, 1, 1). Returns (joint, cand) where joint has shape
    (C, C, P, S, H, H), normalized over all cells. Continuous factors are
    approximated by density-at-center times cell volume.
    """
    cand = CandidateSet(pool)
    C = cand.n_candidates
    y2 = y[:, 0, 0]  # two scalar observations

    p_c = GridSpec.centers(grid.p_edges)
    p_w = GridSpec.widths(grid.p_edges)
    s2_c = GridSpec.centers(grid.s2_edges)
    s2_w = GridSpec.widths(grid.s2_edges)
    h_c = GridSpec.centers(grid.h_edges)
    h_w = GridSpec.widths(grid.h_edges)

    # Mixture-weight factor: Dirichlet([g1, g2]) density at (p, 1-p) plus the
    # per-symbol label weights log(p_a / |a|).
    log_dir = ((gamma[0] - 1.0) * np.log(p_c) + (gamma[1] - 1.0) * np.log1p(-p_c)
               + math.lgamma(gamma.sum()) - math.lgamma(gamma[0]) - math.lgamma(gamma[1])
               + np.log(p_w))
    p_of_label = np.stack([p_c, 1.0 - p_c])           # (2, P)
    log_label = np.log(p_of_label[cand.labels])       # (C, P)
    log_label -= np.log(cand.sizes[cand.labels])[:, None]

    # Channel prior CN(0, alpha_h) on the scalar tap, over the 2-D grid.
    hr, hi = np.meshgrid(h_c, h_c, indexing="ij")
    hgrid = hr + 1j * hi
    log_h_prior = (-math.log(math.pi * alpha_h) - (np.abs(hgrid) ** 2) / alpha_h
                   + np.log(np.outer(h_w, h_w)))

    # Noise-variance prior IG(alpha0, beta0).
    log_s2_prior = (alpha0 * math.log(beta0) - math.lgamma(alpha0)
                    - (alpha0 + 1.0) * np.log(s2_c) - beta0 / s2_c + np.log(s2_w))

    # Likelihood: residual norm per (symbol pair, h cell), then combined with
    # each sigma2 cell.
    v = cand.values
    r1 = y2[0] - hgrid[None, :, :] * v[:, None, None]      # (C, H, H)
    r2 = y2[1] - hgrid[None, :, :] * v[:, None, None]
    rss = np.abs(r1)[:, None, :, :] ** 2 + np.abs(r2)[None, :, :, :] ** 2  # (C, C, H, H)
    loglik = (-2.0 * np.log(math.pi * s2_c)[None, None, :, None, None]
              - rss[:, :, None, :, :] / s2_c[None, None, :, None, None])

    logjoint = (loglik[:, :, None, :, :, :]
                + log_s2_prior[None, None, None, :, None, None]
                + log_h_prior[None, None, None, None, :, :]
                + log_dir[None, None, :, None, None, None]
                + (log_label[:, None, :] + log_label[None, :, :])[:, :, :, None, None, None])
    logjoint -= logjoint.max()
    joint = np.exp(logjoint)
    joint /= joint.sum()
    return joint, cand


def bin_index(edges: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Bin values into [edges] cells, clipping outliers into the edge bins."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p).ravel() - np.asarray(q).ravel()).sum())

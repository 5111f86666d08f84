"""Naive unscaled forward/backward recursions, used only to check the engine.

Everything here is literal: emission probabilities are ``1 - mu`` / ``mu`` by
match, the copying prior is materialised as a full matrix, and the raw
recursions carry the running sums ``F`` and ``G`` without any rescaling.
Arithmetic is in ``np.longdouble`` with compensated summation so the raw
probabilities neither underflow nor lose precision on the instance sizes
allowed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LSEngineError
from .params import ModelParameters, UniformPi

MAX_HAPS = 64
MAX_VARIANTS = 256

LD = np.longdouble


class OracleTooLarge(LSEngineError):
    code = "LSE_ORACLE_SIZE"


@dataclass
class OracleResult:
    raw_alpha: np.ndarray  # L x N x N, [l, donor, recipient]
    raw_beta: np.ndarray
    posteriors: np.ndarray  # float64
    likelihood: np.ndarray  # per recipient


def compensated_colsum(x: np.ndarray) -> np.ndarray:
    """Neumaier summation down axis 0, vectorised over columns."""
    s = np.zeros(x.shape[1:], dtype=x.dtype)
    c = np.zeros_like(s)
    for row in x:
        t = s + row
        big = np.abs(s) >= np.abs(row)
        c += np.where(big, (s - t) + row, (row - t) + s)
        s = t
    return s + c


def _emission(haps: np.ndarray, mu_l) -> np.ndarray:
    """theta[j, i] for one variant: 1 - mu if donor j matches recipient i, else mu."""
    match = haps[:, None] == haps[None, :]
    mu_l = LD(mu_l)
    return np.where(match, LD(1) - mu_l, mu_l)


def oracle_run(haps, pars: ModelParameters) -> OracleResult:
    h = np.asarray(haps)
    L, n = h.shape
    if n > MAX_HAPS or L > MAX_VARIANTS:
        raise OracleTooLarge(f"oracle limited to N <= {MAX_HAPS}, L <= {MAX_VARIANTS}")
    if (n, L) != (pars.n_haps, pars.n_variants):
        raise LSEngineError("parameters do not match the haplotype matrix")

    if isinstance(pars.pi, UniformPi):
        pi = np.full((n, n), LD(1) / LD(n - 1), dtype=LD)
        np.fill_diagonal(pi, 0)
    else:
        pi = pars.pi.matrix.astype(LD)
    rho = pars.rho.astype(LD)
    mu = np.broadcast_to(np.asarray(pars.mu, dtype=np.float64), (L,)).astype(LD)
    theta = np.stack([_emission(h[l], mu[l]) for l in range(L)])

    alpha = np.empty((L, n, n), dtype=LD)
    alpha[0] = theta[0] * pi
    for l in range(1, L):
        F = compensated_colsum(alpha[l - 1])
        alpha[l] = theta[l] * ((1 - rho[l - 1]) * alpha[l - 1] + rho[l - 1] * F * pi)

    beta = np.empty((L, n, n), dtype=LD)
    beta[L - 1] = 1
    for l in range(L - 2, -1, -1):
        G = compensated_colsum(beta[l + 1] * theta[l + 1] * pi)
        beta[l] = (1 - rho[l]) * beta[l + 1] * theta[l + 1] + rho[l] * G

    joint = alpha * beta
    joint[:, np.arange(n), np.arange(n)] = 0
    total = np.stack([compensated_colsum(joint[l]) for l in range(L)])
    post = (joint / total[:, None, :]).astype(np.float64)
    return OracleResult(
        raw_alpha=alpha,
        raw_beta=beta,
        posteriors=post,
        likelihood=compensated_colsum(alpha[L - 1]),
    )

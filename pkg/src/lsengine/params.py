"""Model parameters: recombination, mutation and copying-prior values."""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import hap_cache
from .errors import ParameterError, UnsupportedError

DEFAULT_MU = 1e-8
PI_COLUMN_TOL = 1e-12


@dataclass(frozen=True)
class UniformPi:
    value: float


@dataclass(frozen=True, eq=False)
class DensePi:
    matrix: np.ndarray  # N x N, column i = prior over donors for recipient i


@dataclass(frozen=True, eq=False)
class ModelParameters:
    rho: np.ndarray
    mu: float | np.ndarray
    pi: UniformPi | DensePi
    check_rho: bool
    params_hash: bytes
    n_haps: int
    n_variants: int
    pi_rows: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def mu_kind(self) -> str:
        return "scalar" if np.ndim(self.mu) == 0 else "vector"

    @property
    def pi_kind(self) -> str:
        return "uniform" if isinstance(self.pi, UniformPi) else "dense"

    def kernel_mu(self) -> np.ndarray:
        return _readonly(np.atleast_1d(np.asarray(self.mu, dtype=np.float64)))

    def kernel_pi(self) -> np.ndarray:
        """Uniform: 1x1 array.  Dense: the transpose, so recipient ``i`` is row ``i``."""
        if isinstance(self.pi, UniformPi):
            return np.full((1, 1), self.pi.value)
        return self.pi_rows

    def __str__(self) -> str:
        r = self.rho
        rho_txt = ", ".join(f"{x:.15g}" for x in r) if r.size <= 6 else (
            ", ".join(f"{x:.15g}" for x in r[:3]) + ", ..., "
            + ", ".join(f"{x:.15g}" for x in r[-3:])
        )
        mu_txt = f"{self.mu:.15g}" if self.mu_kind == "scalar" else f"vector of length {self.mu.size}"
        pi_txt = (
            f"{self.pi.value:.15g}" if isinstance(self.pi, UniformPi)
            else f"{self.n_haps} x {self.n_haps} matrix"
        )
        return (
            "Parameters object with:\n"
            f"  rho   = ({rho_txt})\n  mu    = {mu_txt}\n  Pi    = {pi_txt}"
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


def calc_rho(cm_gaps, s: float = 1.0, gamma: float = 1.0) -> np.ndarray:
    """Recombination probabilities from inter-variant map distances in cM.

    ``rho = 1 - exp(-s * (cM / 100) ** gamma)``, evaluated with ``expm1`` so
    tiny distances keep full precision.
    """
    m = np.asarray(cm_gaps, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ParameterError("map distances must be finite")
    if np.any(m < 0):
        raise ParameterError("map distances must be non-negative")
    if not s > 0 or not gamma > 0:
        raise ParameterError("s and gamma must be positive")
    return -np.expm1(-s * (m / 100.0) ** gamma)


def rho_from_map(positions_cm) -> np.ndarray:
    """Gaps between consecutive cumulative map positions (cM)."""
    pos = np.asarray(positions_cm, dtype=np.float64)
    gaps = np.diff(pos)
    if np.any(gaps < 0):
        raise ParameterError("recombination map positions must be non-decreasing")
    return gaps


def _canonical_bytes(rho, mu, pi, check_rho: bool) -> bytes:
    parts = [np.ascontiguousarray(rho, dtype="<f8").tobytes()]
    if np.ndim(mu) == 0:
        parts += [b"m", np.asarray([mu], dtype="<f8").tobytes()]
    else:
        parts += [b"M", np.ascontiguousarray(mu, dtype="<f8").tobytes()]
    if isinstance(pi, UniformPi):
        parts += [b"u", np.asarray([pi.value], dtype="<f8").tobytes()]
    else:
        parts += [b"d", np.ascontiguousarray(pi.matrix, dtype="<f8").tobytes()]
    parts.append(bytes([int(check_rho)]))
    return b"".join(parts)


def make_parameters(
    rho=None,
    mu=DEFAULT_MU,
    pi=None,
    check_rho: bool = True,
    use_speidel: bool = False,
    cache: hap_cache.HaplotypeCache | None = None,
) -> ModelParameters:
    """Build a frozen parameter set consistent with the loaded haplotypes.

    ``rho`` has ``L - 1`` entries (between consecutive variants; default all
    zero), ``mu`` is a scalar or length-``L`` vector, ``pi`` is omitted for the
    uniform prior ``1/(N-1)`` or given as an ``N x N`` column-stochastic
    matrix with zero diagonal.
    """
    if use_speidel:
        raise UnsupportedError("the asymmetric (speidel) mutation model is not supported")
    cache = cache if cache is not None else hap_cache.current_cache()
    n, L = cache.n_haps, cache.n_variants

    rho_user = np.zeros(L - 1) if rho is None else np.asarray(rho, dtype=np.float64)
    if rho_user.ndim != 1 or rho_user.size != L - 1:
        raise ParameterError(f"rho must have length L-1 = {L - 1}, got {rho_user.size}")
    full_rho = np.append(rho_user, 1.0)
    if check_rho:
        if not np.all(np.isfinite(full_rho)):
            raise ParameterError("rho contains non-finite values")
        if np.any(full_rho < 0) or np.any(full_rho > 1):
            raise ParameterError("rho entries must lie in [0, 1]")

    mu_arr = np.asarray(mu, dtype=np.float64)
    if mu_arr.ndim == 0:
        mu_val: float | np.ndarray = float(mu_arr)
    elif mu_arr.ndim == 1 and mu_arr.size == L:
        mu_val = _readonly(mu_arr)
    else:
        raise ParameterError(f"mu must be a scalar or have length L = {L}")
    if not np.all((mu_arr > 0) & (mu_arr < 0.5)):
        raise ParameterError("mu must lie in the open interval (0, 0.5)")

    if pi is None:
        pi_val: UniformPi | DensePi = UniformPi(1.0 / (n - 1))
        pi_rows = None
    else:
        mat = np.asarray(pi, dtype=np.float64)
        if mat.shape != (n, n):
            raise ParameterError(f"Pi must be {n} x {n}, got {mat.shape}")
        if not np.all(np.isfinite(mat)) or np.any(mat < 0):
            raise ParameterError("Pi entries must be finite and non-negative")
        if np.any(np.diag(mat) != 0):
            raise ParameterError("Pi diagonal must be exactly zero")
        colsum = mat.sum(axis=0)
        bad = np.flatnonzero(np.abs(colsum - 1) > PI_COLUMN_TOL)
        if bad.size:
            raise ParameterError(f"Pi column {bad[0]} sums to {colsum[bad[0]]!r}, not 1")
        off = mat[~np.eye(n, dtype=bool)]
        if np.all(off == off[0]):
            warnings.warn(
                "uniform Pi given as a dense matrix; omit Pi to use the faster uniform kernel",
                stacklevel=2,
            )
        pi_val = DensePi(_readonly(mat))
        pi_rows = _readonly(np.ascontiguousarray(mat.T))

    rho_final = _readonly(full_rho)
    digest = hashlib.sha256(_canonical_bytes(rho_final, mu_val, pi_val, check_rho)).digest()
    pars = ModelParameters(
        rho=rho_final,
        mu=mu_val,
        pi=pi_val,
        check_rho=check_rho,
        params_hash=digest,
        n_haps=n,
        n_variants=L,
        pi_rows=pi_rows,
    )
    return pars

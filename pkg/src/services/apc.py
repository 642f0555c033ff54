"""Arbitrary polynomial chaos from sample moments, with tensor Gaussian quadrature."""
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy import linalg

from src.core.config import settings
from src.core.exceptions import DataError, DegenerateMomentsError
from src.services.archive import read_archive, write_archive

logger = logging.getLogger(__name__)

ARCHIVE_MAGIC = b"WCDSURR1"
HANKEL_PIVOT_RTOL = 1e-12
STATS_RTOL = 1e-8

@dataclass(frozen=True)
class MomentSet:
    """Raw moments mu_0..mu_2p of one variable"""
    moments: np.ndarray
    p: int

    def __post_init__(self):
        moments = np.asarray(self.moments, dtype=np.float64)
        if self.p < 1:
            raise ValueError(f"polynomial order p must be at least 1, got {self.p}")
        if moments.shape != (2 * self.p + 1,):
            raise ValueError(f"expected {2 * self.p + 1} moments for p={self.p}, got {moments.size}")
        if not math.isclose(moments[0], 1.0, rel_tol=0.0, abs_tol=1e-12):
            raise ValueError(f"mu_0 must be 1, got {moments[0]}")
        moments.flags.writeable = False
        object.__setattr__(self, "moments", moments)

    def hankel(self) -> np.ndarray:
        """(p+1) x (p+1) matrix with entry (i, j) = mu_{i+j}"""
        return linalg.hankel(self.moments[:self.p + 1], self.moments[self.p:])

def hankel_cholesky(m: MomentSet) -> np.ndarray:
    """Upper factor R of the moment Hankel matrix (H = R^T R).

    Raises:
        DegenerateMomentsError: naming the first leading minor that is not
            (numerically) positive
    """
    hankel = m.hankel()
    try:
        upper = linalg.cholesky(hankel, lower=False)
    except linalg.LinAlgError:
        upper = None
    diag = np.diag(hankel)
    for j in range(hankel.shape[0]):
        if upper is None or upper[j, j] ** 2 <= HANKEL_PIVOT_RTOL * abs(diag[j]):
            minor = j + 1
            # report the first minor that fails; without a factor locate it directly
            if upper is None:
                minor = next(
                    (k for k in range(1, hankel.shape[0] + 1) if linalg.det(hankel[:k, :k]) <= 0.0),
                    hankel.shape[0],
                )
            raise DegenerateMomentsError(
                f"moment Hankel matrix is not positive definite (leading minor of order {minor}); "
                "the samples do not support polynomials of this order",
                minor=minor,
            )
    return upper

def moments_from_values(moments: Sequence[float], p: int) -> MomentSet:
    """MomentSet from known moments (e.g. an analytic distribution), validated"""
    m = MomentSet(np.asarray(moments[:2 * p + 1], dtype=np.float64), p)
    hankel_cholesky(m)
    return m

def raw_moments(samples: np.ndarray, p: int) -> MomentSet:
    """mu_k = (1/q) sum s_i^k for k = 0..2p, accumulated about the sample mean"""
    samples = np.asarray(samples, dtype=np.float64).reshape(-1)
    if p < 1:
        raise ValueError(f"polynomial order p must be at least 1, got {p}")
    if samples.size < 2 * p + 1:
        raise DegenerateMomentsError(
            f"{samples.size} samples cannot determine {2 * p + 1} moments for p={p}"
        )
    if not np.all(np.isfinite(samples)):
        raise DataError("samples must be finite")

    center = samples.mean()
    powers = np.arange(2 * p + 1)
    central = np.mean((samples - center)[:, None] ** powers[None, :], axis=0)
    # binomial shift back to moments about zero
    moments = np.array([
        sum(math.comb(int(k), j) * center ** (k - j) * central[j] for j in range(k + 1))
        for k in powers
    ])
    moments[0] = 1.0
    m = MomentSet(moments, p)
    hankel_cholesky(m)
    return m

@dataclass(frozen=True)
class UnivariateBasis:
    """Orthonormal polynomials psi_0..psi_p with their p-point Gaussian rule.

    `coefficients[j, i]` is the coefficient of xi**i in psi_j.
    """
    moments: MomentSet
    a: np.ndarray
    b: np.ndarray
    coefficients: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def p(self) -> int:
        return self.moments.p

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """psi_0..psi_p at points x, shape (len(x), p+1), via the recurrence"""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        values = np.empty((x.size, self.p + 1))
        values[:, 0] = 1.0
        previous = np.zeros(x.size)
        for j in range(1, self.p + 1):
            b_prev = self.b[j - 2] if j >= 2 else 0.0
            values[:, j] = ((x - self.a[j - 1]) * values[:, j - 1] - b_prev * previous) / self.b[j - 1]
            previous = values[:, j - 1]
        return values

def build_univariate_basis(m: MomentSet) -> UnivariateBasis:
    """Recurrence coefficients from the Hankel Cholesky factor, then Golub-Welsch.

    With the factor R indexed from 1 and r_00 = 1, r_01 = 0:
        a_j = r_{j,j+1}/r_{j,j} - r_{j-1,j}/r_{j-1,j-1}
        b_j = r_{j+1,j+1}/r_{j,j}
    """
    upper = hankel_cholesky(m)
    p = m.p
    # pad so that padded[j, k] is r_{j,k} in 1-based indexing
    padded = np.zeros((p + 2, p + 2))
    padded[1:, 1:] = upper
    padded[0, 0] = 1.0
    a = np.empty(p)
    b = np.empty(p)
    for j in range(1, p + 1):
        a[j - 1] = padded[j, j + 1] / padded[j, j] - padded[j - 1, j] / padded[j - 1, j - 1]
        b[j - 1] = padded[j + 1, j + 1] / padded[j, j]
    if np.any(b <= 0.0):
        raise DegenerateMomentsError("non-positive recurrence coefficient b_j", minor=int(np.argmax(b <= 0.0)) + 2)

    # monomial coefficients by running the recurrence forward
    coefficients = np.zeros((p + 1, p + 1))
    coefficients[0, 0] = 1.0
    for j in range(1, p + 1):
        shifted = np.roll(coefficients[j - 1], 1)
        shifted[0] = 0.0
        term = shifted - a[j - 1] * coefficients[j - 1]
        if j >= 2:
            term -= b[j - 2] * coefficients[j - 2]
        coefficients[j] = term / b[j - 1]

    jacobi = np.diag(a) + np.diag(b[:-1], 1) + np.diag(b[:-1], -1)
    nodes, vectors = linalg.eigh(jacobi)
    weights = vectors[0, :] ** 2
    return UnivariateBasis(moments=m, a=a, b=b, coefficients=coefficients, nodes=nodes, weights=weights)

def quadrature_exactness_check(basis: UnivariateBasis, m: MomentSet) -> float:
    """max_{k <= 2p-1} |sum_i w_i zeta_i^k - mu_k|"""
    powers = np.arange(2 * basis.p)
    rule = basis.weights @ (basis.nodes[:, None] ** powers[None, :])
    return float(np.max(np.abs(rule - m.moments[:2 * basis.p])))

@dataclass(frozen=True)
class MultiIndexSet:
    """Total-degree multi-indices in graded lexicographic order"""
    indices: np.ndarray
    p: int

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    @property
    def n_variables(self) -> int:
        return self.indices.shape[1]

    def labels(self) -> List[str]:
        return ["(" + ",".join(str(int(i)) for i in row) + ")" for row in self.indices]

def build_index_set(n_u: int, p: int) -> MultiIndexSet:
    if n_u < 1 or p < 0:
        raise ValueError(f"need n_u >= 1 and p >= 0, got n_u={n_u}, p={p}")
    rows = [idx for idx in product(range(p + 1), repeat=n_u) if sum(idx) <= p]
    rows.sort(key=lambda idx: (sum(idx), idx))
    indices = np.array(rows, dtype=np.int64)
    assert indices.shape[0] == math.comb(n_u + p, p)
    return MultiIndexSet(indices=indices, p=p)

def tensor_nodes(bases: Sequence[UnivariateBasis]) -> Tuple[np.ndarray, np.ndarray]:
    """Full tensor rule: node tuples (first variable varies slowest) and product weights"""
    if not bases:
        raise ValueError("need at least one basis")
    nodes = np.array(list(product(*(b.nodes for b in bases))), dtype=np.float64)
    weights = np.array([math.prod(w) for w in product(*(b.weights for b in bases))], dtype=np.float64)
    return nodes, weights

def pce_basis_eval(bases: Sequence[UnivariateBasis], index_set: MultiIndexSet, xi: np.ndarray) -> np.ndarray:
    """Psi_k(xi) for each row of xi; shape (n_points, N_P)"""
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    if xi.shape[1] != len(bases) or index_set.n_variables != len(bases):
        raise ValueError(f"xi has {xi.shape[1]} columns, index set {index_set.n_variables}, bases {len(bases)}")
    psi = np.ones((xi.shape[0], index_set.size))
    for v, basis in enumerate(bases):
        if index_set.p > basis.p:
            raise ValueError(f"basis {v} has order {basis.p} below the index-set order {index_set.p}")
        univariate = basis.evaluate(xi[:, v])
        psi *= univariate[:, index_set.indices[:, v]]
    return psi

@dataclass(frozen=True)
class Surrogate:
    """PCE of one output series x(t, xi); `coefficients` is N_P x T"""
    coefficients: np.ndarray
    bases: Tuple[UnivariateBasis, ...]
    index_set: MultiIndexSet
    nodes: np.ndarray
    weights: np.ndarray
    node_outputs: np.ndarray
    times: Optional[np.ndarray] = None

    @property
    def n_steps(self) -> int:
        return self.coefficients.shape[1]

    def evaluate(self, xi: np.ndarray, t_index: Optional[int] = None) -> np.ndarray:
        """Values at xi rows: (n, T), or (n,) for a single step"""
        psi = pce_basis_eval(self.bases, self.index_set, xi)
        if t_index is None:
            return psi @ self.coefficients
        return psi @ self.coefficients[:, t_index]

def fit_surrogate(
    node_outputs: np.ndarray,
    bases: Sequence[UnivariateBasis],
    index_set: MultiIndexSet,
    times: Optional[np.ndarray] = None,
) -> Surrogate:
    """alpha_k(t) = sum over tuples of weight * output(t) * Psi_k(tuple)"""
    node_outputs = np.asarray(node_outputs, dtype=np.float64)
    if node_outputs.ndim == 1:
        node_outputs = node_outputs[:, None]
    nodes, weights = tensor_nodes(bases)
    if node_outputs.shape[0] != nodes.shape[0]:
        raise DataError(
            f"node_outputs has {node_outputs.shape[0]} rows but the tensor rule has {nodes.shape[0]} tuples"
        )
    if not np.all(np.isfinite(node_outputs)):
        raise DataError("node outputs must be finite")
    psi = pce_basis_eval(bases, index_set, nodes)
    coefficients = psi.T @ (weights[:, None] * node_outputs)
    return Surrogate(
        coefficients=coefficients,
        bases=tuple(bases),
        index_set=index_set,
        nodes=nodes,
        weights=weights,
        node_outputs=node_outputs,
        times=None if times is None else np.asarray(times, dtype=np.float64),
    )

def surrogate_eval(s: Surrogate, t_index: int, xi: np.ndarray) -> float:
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (len(s.bases),):
        raise ValueError(f"xi must have length {len(s.bases)}, got shape {xi.shape}")
    return float(s.evaluate(xi[None, :], t_index)[0])

def quadrature_stats(s: Surrogate, t_index: int) -> Tuple[float, float]:
    """Weighted node mean and variance of the output at one step"""
    values = s.node_outputs[:, t_index]
    mean = float(s.weights @ values)
    variance = float(s.weights @ (values - mean) ** 2)
    return mean, variance

def surrogate_stats(s: Surrogate, t_index: int) -> Tuple[float, float]:
    """(alpha_1, sum_{k >= 2} alpha_k^2) at one step"""
    alpha = s.coefficients[:, t_index]
    mean = float(alpha[0])
    variance = float(np.sum(alpha[1:] ** 2))
    q_mean, q_variance = quadrature_stats(s, t_index)
    scale = 1.0 + abs(q_mean) + q_variance
    if abs(mean - q_mean) > STATS_RTOL * scale or abs(variance - q_variance) > STATS_RTOL * scale:
        logger.warning(
            f"PCE statistics at step {t_index} differ from quadrature "
            f"(mean {mean:.6g} vs {q_mean:.6g}, variance {variance:.6g} vs {q_variance:.6g}); "
            "the output is not resolved by total degree p"
        )
    return mean, variance

def build_bases(xi_samples: np.ndarray, p: int) -> List[UnivariateBasis]:
    """One basis per column of the xi sample matrix"""
    xi_samples = np.atleast_2d(np.asarray(xi_samples, dtype=np.float64))
    bases = []
    for k in range(xi_samples.shape[1]):
        try:
            bases.append(build_univariate_basis(raw_moments(xi_samples[:, k], p)))
        except DegenerateMomentsError as e:
            raise DegenerateMomentsError(f"xi_{k + 1}: {e}", minor=e.minor) from e
    return bases

def save_surrogate(s: Surrogate, path: Union[str, Path]) -> None:
    """Archive `WCDSURR1`: dims (N_U, p_basis, p_index, T, n_tuples, has_times), then
    moments per variable, alpha (N_P x T), node outputs (n_tuples x T), times"""
    p_basis = s.bases[0].p
    if any(b.p != p_basis for b in s.bases):
        raise ValueError("archive requires a common basis order")
    times = s.times if s.times is not None else np.zeros(0)
    write_archive(
        path,
        ARCHIVE_MAGIC,
        [len(s.bases), p_basis, s.index_set.p, s.n_steps, s.nodes.shape[0], int(s.times is not None)],
        [*(b.moments.moments for b in s.bases), s.coefficients, s.node_outputs, times],
    )

def load_surrogate(path: Union[str, Path]) -> Surrogate:
    dims, reader = read_archive(path, ARCHIVE_MAGIC)
    if len(dims) != 6:
        raise DataError(f"{path}: expected 6 header dims, found {len(dims)}")
    n_u, p_basis, p_index, n_steps, n_tuples, has_times = dims
    bases = [build_univariate_basis(MomentSet(reader.take(2 * p_basis + 1), p_basis)) for _ in range(n_u)]
    index_set = build_index_set(n_u, p_index)
    coefficients = reader.take(index_set.size, n_steps)
    node_outputs = reader.take(n_tuples, n_steps)
    times = reader.take(n_steps) if has_times else None
    reader.finish()
    nodes, weights = tensor_nodes(bases)
    return Surrogate(
        coefficients=coefficients,
        bases=tuple(bases),
        index_set=index_set,
        nodes=nodes,
        weights=weights,
        node_outputs=node_outputs,
        times=times,
    )

def dump_coefficients(s: Surrogate, every: int = 1) -> str:
    """Text table of alpha_k(t), one row per (sub-sampled) time step"""
    fmt = settings.CSV_FLOAT_FORMAT
    header = ["step", "t"] + [f"a{label}" for label in s.index_set.labels()]
    lines = ["\t".join(header)]
    for j in range(0, s.n_steps, max(1, every)):
        t = s.times[j] if s.times is not None else float(j)
        row = [str(j), fmt % t] + [fmt % value for value in s.coefficients[:, j]]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"

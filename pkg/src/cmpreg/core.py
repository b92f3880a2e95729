"""COM-Poisson distribution in the (lambda, nu) and (mu, phi) parametrizations.

The normalizing constant is accumulated in log-space, so parameter regions
where a direct double-precision sum overflows still give finite values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln

DEFAULT_REL_TOL = 1e-12
DEFAULT_MAX_TERMS = 10_000
QUANTILE_TAIL = 1e-12


class SeriesDivergenceError(ArithmeticError):
    """Z(lambda, nu) diverges: nu == 0 with lambda >= 1."""


class SeriesConvergenceError(ArithmeticError):
    """The series did not meet its tail bound within ``max_terms``."""


class NumericOverflowError(OverflowError):
    """Direct double-precision summation overflowed (compatibility mode)."""


class ParameterDomainError(ValueError):
    pass


class QuantileCapWarning(UserWarning):
    pass


@dataclass(frozen=True)
class OriginalParams:
    lam: float
    nu: float

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise ParameterDomainError(f"lambda must be positive, got {self.lam}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ParameterDomainError(f"nu must be non-negative, got {self.nu}")

    @property
    def divergent(self) -> bool:
        """True when the normalizing series diverges mathematically."""
        return self.nu == 0 and self.lam >= 1


@dataclass(frozen=True)
class MeanParams:
    mu: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0):
            raise ParameterDomainError(f"mu must be positive, got {self.mu}")
        if not math.isfinite(self.phi):
            raise ParameterDomainError(f"phi must be finite, got {self.phi}")
        if self.base <= 0:
            raise ParameterDomainError(
                f"mu + (nu - 1)/(2 nu) must be positive; got {self.base} "
                f"for mu={self.mu}, phi={self.phi}"
            )

    @property
    def nu(self) -> float:
        return math.exp(self.phi)

    @property
    def base(self) -> float:
        # mu + (nu - 1)/(2 nu), written to stay accurate near phi = 0
        return self.mu - 0.5 * math.expm1(-self.phi)


Params = Union[OriginalParams, MeanParams]


@dataclass(frozen=True)
class LogZ:
    log_value: float
    terms_used: int
    converged: bool
    tail_bound: float


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    method: str = "exact_series"


@dataclass(frozen=True)
class DispersionIndexes:
    di: float
    zi: float
    ht: dict = field(default_factory=dict)


def mean_base(mu, phi):
    """Vectorized ``mu + (e^phi - 1) / (2 e^phi)``."""
    return np.asarray(mu, dtype=float) - 0.5 * np.expm1(-phi)


def to_original(p: MeanParams) -> OriginalParams:
    nu = p.nu
    return OriginalParams(lam=p.base**nu, nu=nu)


def to_mean(p: OriginalParams) -> MeanParams:
    if p.nu == 0:
        raise ParameterDomainError("nu == 0 has no mean parametrization")
    return MeanParams(mu=approx_mean(p), phi=math.log(p.nu))


def _log_lam_nu(p: Params) -> tuple[float, float]:
    if isinstance(p, MeanParams):
        nu = p.nu
        return nu * math.log(p.base), nu
    return math.log(p.lam), p.nu


def approx_mean(p: Params) -> float:
    """Asymptotic mean ``lambda^(1/nu) - (nu - 1)/(2 nu)``."""
    log_lam, nu = _log_lam_nu(p)
    if nu == 0:
        raise ParameterDomainError("approximate moments need nu > 0")
    return math.exp(log_lam / nu) - (nu - 1) / (2 * nu)


def approx_variance(p: Params) -> float:
    log_lam, nu = _log_lam_nu(p)
    if nu == 0:
        raise ParameterDomainError("approximate moments need nu > 0")
    return math.exp(log_lam / nu) / nu


# -------------------------------------------------------------------------
# series engine

_LGF = gammaln(np.arange(1, 4097, dtype=float))
_LOGJ = np.log(np.arange(4097, dtype=float).clip(min=1e-300))
_LOGJ[0] = -np.inf


def _tables(n: int) -> tuple[np.ndarray, np.ndarray]:
    """log(j!) and log(j) for j = 0..n-1, grown on demand."""
    global _LGF, _LOGJ
    if n > _LGF.size:
        size = max(n, 2 * _LGF.size)
        _LGF = gammaln(np.arange(1, size + 1, dtype=float))
        logj = np.empty(size)
        logj[0] = -np.inf
        logj[1:] = np.log(np.arange(1, size, dtype=float))
        _LOGJ = logj
    return _LGF, _LOGJ


@dataclass
class SeriesResult:
    log_value: np.ndarray
    terms_used: np.ndarray
    converged: np.ndarray
    tail_bound: np.ndarray


def log_series(log_lam, nu: float, power: int = 0, rel_tol: float = DEFAULT_REL_TOL,
               max_terms: int = DEFAULT_MAX_TERMS, compat: bool = False) -> SeriesResult:
    """log of sum_j j^power * lam^j / (j!)^nu for each entry of ``log_lam``.

    Terms are generated in chunks and folded into a running max-scaled sum.
    A row stops at the first j past the mode (t_{j+1} < t_j) where the
    geometric bound t_j * r / (1 - r), r = t_{j+1} / t_j, drops below
    ``rel_tol`` times the partial sum; the terms are log-concave in j, so
    that bound covers the whole remainder. With ``compat`` the terms are
    summed directly in double precision and overflow raises
    :class:`NumericOverflowError`.
    """
    log_lam = np.atleast_1d(np.asarray(log_lam, dtype=float))
    m = log_lam.size

    run_max = np.full(m, -np.inf)
    run_sum = np.zeros(m)
    direct = np.zeros(m)
    terms_used = np.full(m, max_terms, dtype=np.int64)
    converged = np.zeros(m, dtype=bool)
    tail = np.full(m, np.inf)
    active = np.arange(m)

    j0, chunk = 0, 64
    while active.size and j0 < max_terms:
        j1 = min(j0 + chunk, max_terms)
        c = j1 - j0
        lgf, logj = _tables(j1 + 1)
        ll = log_lam[active, None]
        # one look-ahead column so every term has its successor
        L = ll * np.arange(j0, j1 + 1) - nu * lgf[j0:j1 + 1]
        if power:
            L = L + power * logj[j0:j1 + 1]
        cm = np.maximum(run_max[active], L.max(axis=1))
        shift = np.where(np.isfinite(cm), cm, 0.0)
        E = np.exp(L - shift[:, None])
        with np.errstate(invalid="ignore"):
            prev = np.where(np.isfinite(run_max[active]),
                            run_sum[active] * np.exp(run_max[active] - shift), 0.0)
        C = prev[:, None] + np.cumsum(E[:, :c], axis=1)
        cur, nxt = E[:, :c], E[:, 1:]
        stop = (nxt < cur) & (nxt * cur < rel_tol * C * (cur - nxt))

        has = stop.any(axis=1)
        first = np.argmax(stop, axis=1)
        keep = np.where(has, first, c - 1)
        rows = np.arange(active.size)

        if compat:
            cols = np.arange(c)
            Lk = np.where(cols[None, :] <= keep[:, None], L[:, :c], -np.inf)
            with np.errstate(over="ignore"):
                total = direct[active] + np.exp(Lk).sum(axis=1)
            if not np.all(np.isfinite(total)):
                raise NumericOverflowError(
                    "direct summation of the normalizing series overflowed double precision"
                )
            direct[active] = total

        run_sum[active] = C[rows, keep]
        run_max[active] = shift

        done = active[has]
        if done.size:
            k = first[has]
            r = rows[has]
            terms_used[done] = j0 + k + 1
            converged[done] = True
            t_next, t_cur = nxt[r, k], cur[r, k]
            tail[done] = t_next / (1 - t_next / t_cur) / C[r, k]
        active = active[~has]
        j0 = j1
        chunk = min(chunk * 2, 4096)

    with np.errstate(divide="ignore"):
        if compat:
            log_value = np.log(direct)
        else:
            log_value = run_max + np.log(run_sum)
    return SeriesResult(log_value, terms_used, converged, tail)


def log_z_original(p: OriginalParams, rel_tol: float = DEFAULT_REL_TOL,
                   max_terms: int = DEFAULT_MAX_TERMS, compat: bool = False) -> LogZ:
    """Normalizing constant log Z(lambda, nu).

    ``compat=True`` mimics a direct double-precision sum and raises
    :class:`NumericOverflowError` where that overflows.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    if max_terms < 1:
        raise ValueError("max_terms must be >= 1")
    if p.divergent:
        raise SeriesDivergenceError(
            f"Z(lambda={p.lam}, nu=0) diverges: the geometric series needs lambda < 1"
        )
    return _log_z(math.log(p.lam), p.nu, rel_tol, max_terms, compat)


def _log_z(log_lam, nu, rel_tol, max_terms, compat=False) -> LogZ:
    res = log_series(log_lam, nu, 0, rel_tol, max_terms, compat)
    return LogZ(float(res.log_value[0]), int(res.terms_used[0]),
                bool(res.converged[0]), float(res.tail_bound[0]))


def log_z(p: Params, rel_tol: float = DEFAULT_REL_TOL,
          max_terms: int = DEFAULT_MAX_TERMS) -> LogZ:
    if isinstance(p, OriginalParams):
        return log_z_original(p, rel_tol, max_terms)
    log_lam, nu = _log_lam_nu(p)
    return _log_z(log_lam, nu, rel_tol, max_terms)


def _checked_log_z(p: Params, rel_tol, max_terms) -> float:
    lz = log_z(p, rel_tol, max_terms)
    if not lz.converged:
        raise SeriesConvergenceError(
            f"normalizing series for {p} not converged after {lz.terms_used} terms"
        )
    return lz.log_value


def log_pmf(p: Params, y, rel_tol: float = DEFAULT_REL_TOL,
            max_terms: int = DEFAULT_MAX_TERMS):
    """Log probability mass at ``y`` (scalar or array of counts)."""
    log_lam, nu = _log_lam_nu(p)
    lz = _checked_log_z(p, rel_tol, max_terms)
    y_arr = np.asarray(y)
    if np.any(y_arr < 0):
        raise ValueError("counts must be non-negative")
    out = y_arr * log_lam - nu * gammaln(y_arr + 1.0) - lz
    return float(out) if out.ndim == 0 else out


def _cdf_table(p: Params, rel_tol, max_terms) -> np.ndarray:
    """Running pmf sum up to the first y where it reaches 1 - QUANTILE_TAIL."""
    lz = log_z(p, rel_tol, max_terms)
    if not lz.converged:
        raise SeriesConvergenceError(f"normalizing series for {p} not converged")
    n = lz.terms_used
    while True:
        cdf = np.cumsum(np.exp(log_pmf(p, np.arange(n), rel_tol, max_terms)))
        hit = np.flatnonzero(cdf >= 1 - QUANTILE_TAIL)
        if hit.size:
            return cdf[: hit[0] + 1]
        if n >= 4 * max_terms:
            return cdf
        n *= 2


def cdf(p: Params, y: int, rel_tol: float = DEFAULT_REL_TOL,
        max_terms: int = DEFAULT_MAX_TERMS) -> float:
    if y < 0:
        return 0.0
    pmf = np.exp(log_pmf(p, np.arange(int(y) + 1), rel_tol, max_terms))
    return float(min(1.0, math.fsum(pmf)))


def quantile(p: Params, q: float, rel_tol: float = DEFAULT_REL_TOL,
             max_terms: int = DEFAULT_MAX_TERMS) -> int:
    """Smallest y with cdf(y) >= q.

    The search stops where the cdf reaches ``1 - 1e-12``; larger ``q``
    return that cap with a :class:`QuantileCapWarning`.
    """
    if not 0 <= q < 1:
        raise ValueError("q must lie in [0, 1)")
    table = _cdf_table(p, rel_tol, max_terms)
    if q > table[-1]:
        warnings.warn(f"quantile {q} beyond search cap y={table.size - 1}",
                      QuantileCapWarning, stacklevel=2)
        return table.size - 1
    return int(np.searchsorted(table, q, side="left"))


def _rng(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample(p: Params, n: int, rng=None, rel_tol: float = DEFAULT_REL_TOL,
           max_terms: int = DEFAULT_MAX_TERMS) -> np.ndarray:
    """Draw ``n`` counts by inverting uniform variates through the cdf."""
    table = _cdf_table(p, rel_tol, max_terms)
    u = _rng(rng).random(n)
    return np.minimum(np.searchsorted(table, u, side="left"), table.size - 1)


def sample_mean_params(mu, phi: float, rng=None, rel_tol: float = DEFAULT_REL_TOL,
                       max_terms: int = DEFAULT_MAX_TERMS) -> np.ndarray:
    """One draw per entry of ``mu`` from COM-Poisson_mu(mu_i, phi).

    Same inversion rule as :func:`sample`, vectorized over observations.
    """
    mu = np.asarray(mu, dtype=float)
    base = mean_base(mu, phi)
    if np.any(base <= 0):
        raise ParameterDomainError("mu + (nu - 1)/(2 nu) must be positive")
    u = _rng(rng).random(mu.size)
    nu = math.exp(phi)
    uniq, inv = np.unique(base, return_inverse=True)
    log_lam = nu * np.log(uniq)
    res = log_series(log_lam, nu, 0, rel_tol, max_terms)
    if not res.converged.all():
        raise SeriesConvergenceError("normalizing series not converged")
    span = int(res.terms_used.max()) + 1
    lgf, _ = _tables(span)
    j = np.arange(span)
    logp = log_lam[:, None] * j - nu * lgf[:span] - res.log_value[:, None]
    table = np.cumsum(np.exp(logp), axis=1)[inv]
    y = (table < u[:, None]).sum(axis=1)
    return np.minimum(y, span - 1)


def exact_moments(p: Params, rel_tol: float = DEFAULT_REL_TOL,
                  max_terms: int = DEFAULT_MAX_TERMS) -> Moments:
    """Mean and variance by summing the y- and y^2-weighted series."""
    if isinstance(p, OriginalParams) and p.divergent:
        raise SeriesDivergenceError(f"Z diverges for {p}")
    log_lam, nu = _log_lam_nu(p)
    sums = []
    for power in (0, 1, 2):
        res = log_series(log_lam, nu, power, rel_tol, max_terms)
        if not res.converged[0]:
            raise SeriesConvergenceError(f"moment series (power {power}) not converged for {p}")
        sums.append(float(res.log_value[0]))
    lz, ls1, ls2 = sums
    mean = math.exp(ls1 - lz)
    variance = math.exp(ls2 - lz) - mean * mean
    return Moments(mean=mean, variance=variance, method="exact_series")


def indexes(p: Params, ht_ys=(), rel_tol: float = DEFAULT_REL_TOL,
            max_terms: int = DEFAULT_MAX_TERMS) -> DispersionIndexes:
    """Dispersion, zero-inflation and heavy-tail indexes relative to Poisson."""
    mom = exact_moments(p, rel_tol, max_terms)
    lp0 = log_pmf(p, 0, rel_tol, max_terms)
    ht = {}
    for y in ht_ys:
        pair = log_pmf(p, np.array([y, y + 1]), rel_tol, max_terms)
        ht[int(y)] = float(np.exp(pair[1] - pair[0]))
    return DispersionIndexes(di=mom.variance / mom.mean, zi=1 + lp0 / mom.mean, ht=ht)

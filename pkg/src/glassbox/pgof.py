"""Pearson goodness-of-fit statistic, its second-order HDMR and the chi-square HDMR statistic."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .measure import DiscreteLaw

GAUSSIAN_LAMBDA = 30.0
DEGENERATE_LAMBDA = 0.05


class PgofError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CategoricalSample:
    """Observed categories in ``1..k`` under ``law``."""

    values: np.ndarray
    law: DiscreteLaw

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64).ravel()
        if v.size == 0:
            raise PgofError("sample is empty")
        if v.min() < 1 or v.max() > self.law.support_size:
            raise PgofError(f"observations must lie in 1..{self.law.support_size}")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def counts(self) -> np.ndarray:
        return np.bincount(self.values - 1, minlength=self.law.support_size)


@dataclass(frozen=True)
class Chi2Decomposition:
    f0: float
    first_order: float
    second_order: float
    chi2: float
    chi2_hdmr: float
    s_n: float
    u_n: float


def _inverse_probabilities(law: DiscreteLaw) -> np.ndarray:
    p = np.asarray(law.probabilities, dtype=float)
    if np.any(p <= 0):
        raise PgofError("law probabilities must be strictly positive")
    return 1.0 / p


def _from_counts(counts: np.ndarray, inv_p: np.ndarray, n: int) -> Chi2Decomposition:
    k = inv_p.size
    c = counts.astype(float)
    s = float(c @ inv_p)
    u = float((c * (c - 1)) @ inv_p)
    first = (s - n * k) / n
    second = (u - n * (n - 1.0)) / n
    chi2 = (s + u) / n - n
    return Chi2Decomposition(k - 1.0, first, second, chi2, chi2 - first, s, u)


def pearson_chi2(sample: CategoricalSample) -> float:
    """``n sum_k (p_hat_k - p_k)^2 / p_k`` from one pass over the counts."""
    inv_p = _inverse_probabilities(sample.law)
    c = sample.counts().astype(float)
    n = sample.n
    return float(np.sum((c - n / inv_p) ** 2 * inv_p) / n)


def chi2_decompose(sample: CategoricalSample) -> Chi2Decomposition:
    """``chi2 = f0 + sum f_i + sum_{i<j} f_ij`` evaluated in ``O(n + k)``.

    ``sum_{i<j} f_ij = (U_n - n(n-1)) / n`` with ``U_n = sum_k c_k (c_k - 1) / p_k``.
    """
    return _from_counts(sample.counts(), _inverse_probabilities(sample.law), sample.n)


def pair_components(sample: CategoricalSample) -> np.ndarray:
    """Dense ``f_ij`` matrix (``i < j`` upper triangle); ``O(n^2)``, for checks only."""
    inv_p = _inverse_probabilities(sample.law)
    x = sample.values
    n = sample.n
    eq = x[:, None] == x[None, :]
    f = 2.0 / n * (inv_p[x - 1][:, None] * eq - 1.0)
    return np.triu(f, 1)


def first_components(sample: CategoricalSample) -> np.ndarray:
    inv_p = _inverse_probabilities(sample.law)
    return (inv_p[sample.values - 1] - inv_p.size) / sample.n


def inverse_probability_variance(law: DiscreteLaw) -> float:
    """``Var mu^{-1}{X} = sum_k 1/p_k - k^2``."""
    inv_p = _inverse_probabilities(law)
    return float(inv_p.sum() - inv_p.size**2)


def variance_formula(n: int, law: DiscreteLaw) -> float:
    """``Var chi2 = n^{-1} (Var mu^{-1}{X} + 2 (n - 1)(k - 1))``."""
    k = law.support_size
    return (inverse_probability_variance(law) + 2.0 * (n - 1) * (k - 1)) / n


def hdmr_variance_formula(n: int, law: DiscreteLaw) -> float:
    """``Var chi2_HDMR = C(n,2) Var f_ij = 2 (n - 1)(k - 1) / n``."""
    return 2.0 * (n - 1) * (law.support_size - 1) / n


@dataclass(frozen=True)
class Regime:
    lam: float
    law: str
    poisson_mean: float = None

    def cdf(self, t):
        """Limit CDF of the standardized statistic."""
        t = np.asarray(t, dtype=float)
        if self.law == "gaussian":
            return stats.norm.cdf(t)
        if self.law == "degenerate":
            return (t >= 0).astype(float)
        c = self.lam / np.sqrt(2.0)
        return stats.poisson.cdf(np.floor((t + c) * c + 1e-12), self.poisson_mean)


def limit_regime(n: int, k_n: int, gaussian_at: float = GAUSSIAN_LAMBDA, degenerate_below: float = DEGENERATE_LAMBDA) -> Regime:
    """Classify ``lambda = n / sqrt(k_n)`` into the Gaussian, Poisson or degenerate limit."""
    if n < 1 or k_n < 1:
        raise PgofError("n and k_n must be positive")
    lam = n / np.sqrt(k_n)
    if lam >= gaussian_at:
        return Regime(float(lam), "gaussian")
    if lam < degenerate_below:
        return Regime(float(lam), "degenerate")
    return Regime(float(lam), "poisson", float(lam**2 / 2))


def standardize(values, k_n: int) -> np.ndarray:
    return (np.asarray(values, dtype=float) - (k_n - 1)) / np.sqrt(2.0 * (k_n - 1))


RECORD_FIELDS = ("chi2", "chi2_hdmr", "first_order", "second_order", "s_n", "u_n")


def _run_block(args) -> np.ndarray:
    n, probs, start, stop, seed = args
    law = DiscreteLaw(probs)
    inv_p = 1.0 / law.probabilities
    out = np.empty((stop - start, len(RECORD_FIELDS)))
    for j, r in enumerate(range(start, stop)):
        rng = np.random.default_rng(seed + r)
        c = np.bincount(law.draw(rng, n) - 1, minlength=law.support_size)
        d = _from_counts(c, inv_p, n)
        out[j] = (d.chi2, d.chi2_hdmr, d.first_order, d.second_order, d.s_n, d.u_n)
    return out


@dataclass(frozen=True, eq=False)
class Simulation:
    n: int
    law: DiscreteLaw
    seed: int
    records: np.ndarray

    @property
    def replicates(self) -> int:
        return self.records.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.records[:, RECORD_FIELDS.index(name)]

    def summary(self) -> dict:
        k = self.law.support_size
        reg = limit_regime(self.n, k)
        ddof = 1 if self.replicates > 1 else 0
        out = {
            "n": self.n,
            "k_n": k,
            "replicates": self.replicates,
            "seed": self.seed,
            "lambda": reg.lam,
            "regime": reg.law,
            "variance_formula": variance_formula(self.n, self.law),
            "hdmr_variance_formula": hdmr_variance_formula(self.n, self.law),
        }
        for name in ("chi2", "chi2_hdmr", "first_order"):
            v = self.column(name)
            out[f"mean_{name}"] = float(v.mean())
            out[f"var_{name}"] = float(v.var(ddof=ddof))
        out["var_ratio"] = out["var_chi2"] / out["var_chi2_hdmr"] if out["var_chi2_hdmr"] > 0 else float("inf")
        s, u = self.column("s_n"), self.column("u_n")
        out["cov_s_u"] = float(np.cov(s, u)[0, 1]) if self.replicates > 1 else 0.0
        if self.replicates > 1:
            out["ks_chi2"] = ks_distance(standardize(self.column("chi2"), k))
            out["ks_chi2_hdmr"] = ks_distance(standardize(self.column("chi2_hdmr"), k))
        return out

    def records_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(("replicate",) + RECORD_FIELDS)
        for r, row in enumerate(self.records):
            w.writerow([r] + [f"{v:.10g}" for v in row])
        return buf.getvalue()

    def histogram_csv(self, bins: int = 60, lo: float = -5.0, hi: float = 5.0) -> str:
        """Densities of the standardized statistics on a shared grid."""
        k = self.law.support_size
        edges = np.linspace(lo, hi, bins + 1)
        h1, _ = np.histogram(standardize(self.column("chi2"), k), edges, density=True)
        h2, _ = np.histogram(standardize(self.column("chi2_hdmr"), k), edges, density=True)
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(("left", "right", "density_chi2", "density_chi2_hdmr", "density_gaussian"))
        for a, b, p, q in zip(edges[:-1], edges[1:], h1, h2):
            g = (stats.norm.cdf(b) - stats.norm.cdf(a)) / (b - a)
            w.writerow([f"{a:.6g}", f"{b:.6g}", f"{p:.8g}", f"{q:.8g}", f"{g:.8g}"])
        return buf.getvalue()


def ks_distance(standardized: np.ndarray, regime: Regime = None) -> float:
    """Kolmogorov-Smirnov distance to N(0, 1), or to a regime's limit law."""
    x = np.sort(np.asarray(standardized, dtype=float))
    if regime is None or regime.law == "gaussian":
        return float(stats.kstest(x, "norm").statistic)
    m = x.size
    cdf = regime.cdf(x)
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    return float(max(np.max(np.abs(hi - cdf)), np.max(np.abs(cdf - lo))))


def simulate(n: int, law: DiscreteLaw, replicates: int, seed: int = 0, workers: int = 1) -> Simulation:
    """Replicate ``r`` draws ``n`` observations with seed ``seed + r``."""
    if replicates < 1:
        raise PgofError("replicates must be >= 1")
    if n < 2:
        raise PgofError("n must be >= 2")
    probs = np.asarray(law.probabilities)
    workers = max(1, int(workers))
    if workers == 1:
        rec = _run_block((n, probs, 0, replicates, seed))
    else:
        edges = np.linspace(0, replicates, workers + 1).astype(int)
        jobs = [(n, probs, a, b, seed) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ProcessPoolExecutor(workers) as ex:
            rec = np.vstack(list(ex.map(_run_block, jobs)))
    return Simulation(n, law, seed, rec)

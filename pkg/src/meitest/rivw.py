"""Rerandomized instrument selection and the RIVW causal estimator.

Each SNP receives pseudo-noise ``Z_j ~ N(0, eta^2)`` and is selected when
``|gamma_hat_j / sigma_x_j + Z_j| > lambda``. Conditional on that event the
Rao-Blackwellized effect ``gamma_rb`` is unbiased for ``gamma_j`` and
``sigma2_rb`` is unbiased for its conditional variance; both enter the
ratio estimator ``beta_R = theta1 / theta2``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .errors import DegenerateDenominator, InsufficientInstruments, NumericError
from .gwas_io import PairTable
from .stats_dist import RngStream, two_sided_pvalue

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class SelectionConfig:
    lam: float
    eta: float = 0.5

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"selection cutoff must be positive, got {self.lam}")
        if not self.eta > 0:
            raise ValueError(f"rerandomization scale must be positive, got {self.eta}")


@dataclass(frozen=True)
class SelectionRecord:
    index: int
    z_noise: float
    selected: bool
    s_value: float


@dataclass(frozen=True)
class Selection:
    """Outcome of rerandomized selection for every SNP of a table, in table order."""

    z_noise: np.ndarray
    s_value: np.ndarray

    @property
    def selected(self) -> np.ndarray:
        return self.s_value > 0

    @property
    def index(self) -> np.ndarray:
        return np.flatnonzero(self.s_value > 0)

    @property
    def n_selected(self) -> int:
        return int(np.count_nonzero(self.s_value > 0))

    def records(self) -> list[SelectionRecord]:
        return [SelectionRecord(j, float(z), bool(s > 0), float(s))
                for j, (z, s) in enumerate(zip(self.z_noise, self.s_value))]

    def flip(self, mask) -> "Selection":
        """Negate the noise of re-coded SNPs; selection statistics are unchanged."""
        return replace(self, z_noise=np.where(np.asarray(mask, dtype=bool), -self.z_noise, self.z_noise))

    def subset(self, index) -> "Selection":
        return Selection(self.z_noise[index], self.s_value[index])


def selection_statistic(gamma_hat, sigma_x, z_noise, lam):
    return np.abs(np.asarray(gamma_hat) / np.asarray(sigma_x) + np.asarray(z_noise)) - lam


def rerandomized_select(pairs: PairTable, cfg: SelectionConfig, stream: RngStream) -> Selection:
    """Draw one ``Z_j`` per SNP (in table order) and apply the soft threshold."""
    z = cfg.eta * stream.generator().standard_normal(len(pairs))
    return Selection(z, selection_statistic(pairs.gamma_hat, pairs.sigma_x, z, cfg.lam))


@dataclass(frozen=True)
class RBEstimate:
    gamma_rb: np.ndarray
    sigma2_rb: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray

    @property
    def negative_variance(self) -> np.ndarray:
        """SNPs whose unbiased variance estimate came out negative (kept, only flagged)."""
        return self.sigma2_rb < 0


def _log_phi(x):
    return -0.5 * x * x - _LOG_SQRT_2PI


def rao_blackwell(gamma_hat, sigma_x, cfg: SelectionConfig, snp_ids=None) -> RBEstimate:
    """Winner's-curse corrected effects for selected SNPs.

    Works on scalars or arrays. The density/tail ratios are formed as
    ``exp(log phi(A) - log D)`` with ``log D = logaddexp(log Phi(-A+), log Phi(A-))``
    so the correction stays finite for arbitrarily strong instruments.
    """
    g = np.asarray(gamma_hat, dtype=float)
    s = np.asarray(sigma_x, dtype=float)
    eta, lam = cfg.eta, cfg.lam
    t = g / (s * eta)
    a_plus = -t + lam / eta
    a_minus = -t - lam / eta
    log_den = np.logaddexp(special.log_ndtr(-a_plus), special.log_ndtr(a_minus))
    if np.any(~np.isfinite(log_den)):
        bad = np.flatnonzero(np.atleast_1d(~np.isfinite(log_den)))
        names = [str(snp_ids[i]) for i in bad] if snp_ids is not None else [str(i) for i in bad]
        raise NumericError(f"selection probability underflows for SNP(s): {', '.join(names[:10])}")
    r_plus = np.exp(_log_phi(a_plus) - log_den)
    r_minus = np.exp(_log_phi(a_minus) - log_den)
    ratio = r_plus - r_minus
    gamma_rb = g - (s / eta) * ratio
    sigma2_rb = s * s * (1.0 - (a_plus * r_plus - a_minus * r_minus) / eta**2 + ratio * ratio / eta**2)
    if g.ndim == 0:
        return RBEstimate(float(gamma_rb), float(sigma2_rb), float(a_plus), float(a_minus))
    return RBEstimate(gamma_rb, sigma2_rb, a_plus, a_minus)


@dataclass(frozen=True)
class RivwResult:
    beta_hat: float
    se: float
    z: float
    p_value: float
    theta1: float
    theta2: float
    n_selected: int
    kappa_hat: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def rivw_estimate(pairs: PairTable, selection: Selection, rb: RBEstimate) -> RivwResult:
    """RIVW ratio estimate over the selected SNPs.

    ``rb`` holds estimates for the selected SNPs only, in table order.
    The standard error is the moment form built from the per-SNP residuals
    ``omega_j = gamma_rb*Gamma - beta*(gamma_rb^2 - sigma2_rb)``.
    """
    idx = selection.index
    if len(idx) < 2:
        raise InsufficientInstruments(f"RIVW needs at least 2 selected instruments, got {len(idx)}")
    gamma_rb = np.asarray(rb.gamma_rb, dtype=float)
    sigma2_rb = np.asarray(rb.sigma2_rb, dtype=float)
    if gamma_rb.shape != idx.shape:
        raise ValueError("RB estimates must cover exactly the selected SNPs")
    Gamma = pairs.Gamma_hat[idx]
    w = pairs.sigma_y[idx] ** -2.0
    strength = gamma_rb**2 - sigma2_rb
    theta1 = float(np.sum(w * gamma_rb * Gamma))
    theta2 = float(np.sum(w * strength))
    if not theta2 > 0:
        raise DegenerateDenominator(f"theta2 = {theta2:.4g} <= 0; instruments too weak for RIVW")
    beta = theta1 / theta2
    omega2 = gamma_rb * Gamma - beta * strength
    se = float(np.sqrt(np.sum(w * w * omega2 * omega2)) / theta2)
    z = beta / se if se > 0 else (0.0 if beta == 0 else float(np.copysign(np.inf, beta)))
    kappa = float(np.mean(strength / pairs.sigma_x[idx] ** 2))
    return RivwResult(beta, se, z, float(two_sided_pvalue(z)), theta1, theta2, len(idx), kappa)


def fit_rivw(pairs: PairTable, cfg: SelectionConfig, stream: RngStream) -> tuple[RivwResult, Selection, RBEstimate]:
    """Selection, Rao-Blackwellization and estimation in one call."""
    sel = rerandomized_select(pairs, cfg, stream)
    idx = sel.index
    ids = None if pairs.snp_id is None else pairs.snp_id[idx]
    rb = rao_blackwell(pairs.gamma_hat[idx], pairs.sigma_x[idx], cfg, snp_ids=ids)
    return rivw_estimate(pairs, sel, rb), sel, rb


def selected_rows(pairs: PairTable, selection: Selection, rb: RBEstimate) -> list[tuple]:
    """Rows for the selected-set TSV export."""
    idx = selection.index
    ids = pairs.ids()[idx]
    return [
        (str(ids[i]), float(pairs.gamma_hat[j]), float(rb.gamma_rb[i]), float(rb.sigma2_rb[i]),
         float(pairs.Gamma_hat[j]), float(pairs.sigma_y[j]), float(selection.z_noise[j]))
        for i, j in enumerate(idx)
    ]


SELECTED_TSV_HEADER = ("snp_id", "gamma_hat", "gamma_rb", "sigma2_rb", "Gamma_hat", "sigma_y", "z_noise")

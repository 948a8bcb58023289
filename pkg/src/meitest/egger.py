"""MR-Egger regression and the Egger-intercept test."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientInstruments, SingularDesign
from .gwas_io import PairTable
from .stats_dist import two_sided_pvalue


@dataclass(frozen=True)
class EggerResult:
    beta_e: float
    mu_e: float
    se_beta: float
    se_mu: float
    phi_hat: float
    z_e: float
    p_value: float
    n_used: int
    residuals: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "residuals"}


def conventional_select(pairs: PairTable, lam: float) -> PairTable:
    """Keep SNPs with ``|gamma_hat / sigma_x| > lam`` (strict), preserving order."""
    if not lam > 0:
        raise ValueError(f"selection cutoff must be positive, got {lam}")
    keep = np.abs(pairs.gamma_hat / pairs.sigma_x) > lam
    return pairs.subset(np.flatnonzero(keep))


def egger_fit(pairs: PairTable) -> EggerResult:
    """Weighted regression of ``Gamma_hat`` on ``gamma_hat`` with an intercept.

    Weights are ``sigma_y^-2``. The residual variance is multiplicative,
    ``phi = max(1, RSS_w / (m - 2))``, and the intercept z-score is referred
    to the standard normal.
    """
    m = len(pairs)
    if m < 3:
        raise InsufficientInstruments(f"MR-Egger needs at least 3 instruments, got {m}")
    g = pairs.gamma_hat
    G = pairs.Gamma_hat
    w = pairs.sigma_y ** -2.0
    # centred weighted normal equations; stable when gamma_hat values are nearly constant
    sw = w.sum()
    gbar = np.dot(w, g) / sw
    Gbar = np.dot(w, G) / sw
    dg = g - gbar
    sxx = np.dot(w, dg * dg)
    if sxx <= 1e-14 * np.dot(w, g * g):
        raise SingularDesign("all instrument effects are equal; slope and intercept are not identified")
    beta = np.dot(w, dg * (G - Gbar)) / sxx
    mu = Gbar - beta * gbar
    resid = G - mu - beta * g
    rss = float(np.dot(w, resid * resid))
    phi = max(1.0, rss / (m - 2))
    # (X'WX)^-1 for X = [1, g]
    var_mu_unit = 1.0 / sw + gbar * gbar / sxx
    var_beta_unit = 1.0 / sxx
    se_mu = float(np.sqrt(phi * var_mu_unit))
    se_beta = float(np.sqrt(phi * var_beta_unit))
    z = float(mu / se_mu)
    return EggerResult(float(beta), float(mu), se_beta, se_mu, phi, z, float(two_sided_pvalue(z)), m, resid)


def egger_covariance(pairs: PairTable, result: EggerResult) -> np.ndarray:
    """Covariance of ``(mu_e, beta_e)`` as reported by the fit."""
    w = pairs.sigma_y ** -2.0
    X = np.column_stack([np.ones(len(pairs)), pairs.gamma_hat])
    return result.phi_hat * np.linalg.inv(X.T @ (w[:, None] * X))

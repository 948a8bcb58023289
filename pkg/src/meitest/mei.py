"""Modified Egger-intercept (MEI) tests and their combined max-|Z| version.

The MEI numerator replaces the Egger slope by the RIVW estimate and corrects
the remaining selection-induced bias, giving

    Lambda_RC = theta2 * sum(w Gamma) - theta1 * sum(w gamma_rb) + sum(w^2 sigma2_rb Gamma)

with ``w = sigma_y^-2``. Its variance is estimated by ``sum(w^2 u_j^2)``.
The statistic depends on how alleles are coded, so it is computed under the
major-allele and the normal-allele codings and the two are combined.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, DegenerateVariance, InsufficientInstruments, NumericError, StatisticalError
from .gwas_io import CodingScheme, PairTable, orientation_flips
from .rivw import RBEstimate, RivwResult, Selection, SelectionConfig, rao_blackwell, rerandomized_select, rivw_estimate
from .stats_dist import RngStream, bvn_max_abs_sf, two_sided_pvalue


@dataclass(frozen=True)
class MeiResult:
    lambda_r: float
    lambda_rc: float
    v_hat: float
    z_me: float
    p_value: float
    u_hat: np.ndarray
    scheme: CodingScheme | None
    beta_r_used: float
    n_selected: int
    selected_index: np.ndarray
    sigma_y: np.ndarray

    def to_dict(self) -> dict:
        return {
            "scheme": None if self.scheme is None else self.scheme.value,
            "z": self.z_me,
            "p": self.p_value,
            "lambda_r": self.lambda_r,
            "lambda_rc": self.lambda_rc,
            "v_hat": self.v_hat,
            "beta_r": self.beta_r_used,
            "n_selected": self.n_selected,
        }


@dataclass(frozen=True)
class CombinedResult:
    z_major: float
    z_normal: float
    rho_mn: float
    z_combined: float
    p_value: float

    def to_dict(self) -> dict:
        return {"z_major": self.z_major, "z_normal": self.z_normal, "rho_mn": self.rho_mn,
                "z_combined": self.z_combined, "p": self.p_value}


@dataclass(frozen=True)
class H1Diagnostic:
    mu_gamma_sel: float
    tau_gamma_sel: float
    mu_alpha_sel: float
    tau_alpha_sel: float
    rho_sel: float
    expected_numerator: float


def mei_statistic(pairs: PairTable, selection: Selection, rb: RBEstimate, rivw: RivwResult,
                  scheme: CodingScheme | None = None) -> MeiResult:
    """MEI statistic for one allele coding.

    ``pairs`` and ``selection`` must already be in the coding of interest
    (noise flipped together with the effects), and ``rb``/``rivw`` computed
    from them.
    """
    idx = selection.index
    n = len(idx)
    if n < 3:
        raise InsufficientInstruments(f"MEI test needs at least 3 selected instruments, got {n}")
    g = np.asarray(rb.gamma_rb, dtype=float)
    s2 = np.asarray(rb.sigma2_rb, dtype=float)
    if g.shape != idx.shape:
        raise ValueError("RB estimates must cover exactly the selected SNPs")
    Gamma = pairs.Gamma_hat[idx]
    sy = pairs.sigma_y[idx]
    w = sy ** -2.0
    w2 = w * w
    beta = rivw.beta_hat
    strength = g * g - s2
    theta1 = float(np.sum(w * g * Gamma))
    theta2 = float(np.sum(w * strength))
    t_hat = float(np.sum(w * g))
    lambda_r = theta2 * float(np.sum(w * Gamma)) - theta1 * t_hat
    lambda_rc = lambda_r + float(np.sum(w2 * s2 * Gamma))
    u = (Gamma - beta * g) * theta2 - (g * Gamma - beta * strength) * t_hat
    v = float(np.sum(w2 * u * u))
    if not v > 0:
        if lambda_rc != 0.0:
            raise DegenerateVariance("MEI variance estimate is zero")
        # no outcome signal at all (e.g. every Gamma_hat is zero): report z = 0
        z = 0.0
    else:
        z = lambda_rc / math.sqrt(v)
    return MeiResult(lambda_r, lambda_rc, v, z, float(two_sided_pvalue(z)), u, scheme, beta, n,
                     np.asarray(idx), sy)


def combined_test(res_major: MeiResult, res_normal: MeiResult) -> CombinedResult:
    """Max-|Z| combination of the two codings with a bivariate normal p-value."""
    if (res_major.n_selected != res_normal.n_selected
            or not np.array_equal(res_major.selected_index, res_normal.selected_index)
            or not np.array_equal(res_major.sigma_y, res_normal.sigma_y)):
        raise AlignmentError("MEI results were computed on different selection sets")
    w2 = res_major.sigma_y ** -4.0
    uM, uN = res_major.u_hat, res_normal.u_hat
    sM = float(np.sum(w2 * uM * uM))
    sN = float(np.sum(w2 * uN * uN))
    if sM == 0.0 or sN == 0.0:
        raise DegenerateVariance("a per-SNP contribution vector is identically zero")
    rho = float(np.sum(w2 * uM * uN)) / math.sqrt(sM * sN)
    if abs(rho) > 1.0 + 1e-12:
        raise NumericError(f"estimated correlation {rho!r} outside [-1, 1]")
    rho = max(-1.0, min(1.0, rho))
    z = max(abs(res_major.z_me), abs(res_normal.z_me))
    return CombinedResult(res_major.z_me, res_normal.z_me, rho, z, bvn_max_abs_sf(z, rho))


def h1_expected_numerator(gamma, alpha, sigma_y) -> H1Diagnostic:
    """Expected MEI numerator given the selected SNPs' true effects.

    Moments are plain (unweighted) sample moments with ``n - 1`` denominators.
    With a common ``sigma_y`` the returned value then equals
    ``sum(w g^2) sum(w a) - sum(w g a) sum(w g)`` exactly.
    """
    g = np.asarray(gamma, dtype=float)
    a = np.asarray(alpha, dtype=float)
    sy = np.broadcast_to(np.asarray(sigma_y, dtype=float), g.shape)
    if g.shape[0] < 2 or a.shape != g.shape:
        raise ValueError("need at least 2 aligned (gamma, alpha) entries")
    mu_g, mu_a = float(g.mean()), float(a.mean())
    tau_g, tau_a = float(g.std(ddof=1)), float(a.std(ddof=1))
    if tau_g > 0 and tau_a > 0:
        cov = float(np.sum((g - mu_g) * (a - mu_a)) / (len(g) - 1))
        rho = max(-1.0, min(1.0, cov / (tau_g * tau_a)))
    else:
        rho = 0.0
    w = sy ** -2.0
    mult = float(np.sum(w)) ** 2 - float(np.sum(w * w))
    value = mult * (mu_a * tau_g**2 - rho * mu_g * tau_a * tau_g)
    return H1Diagnostic(mu_g, tau_g, mu_a, tau_a, rho, value)


@dataclass
class MeiAnalysis:
    """Everything computed from one shared rerandomized selection."""

    selection: Selection
    rivw: dict
    mei: dict
    combined: CombinedResult | None
    errors: dict
    rb: dict
    flips: dict


def analyze(pairs: PairTable, cfg: SelectionConfig, stream: RngStream,
            schemes=(CodingScheme.MAJOR_ALLELE, CodingScheme.NORMAL_ALLELE),
            selection: Selection | None = None) -> MeiAnalysis:
    """Select once on the as-given coding, then test under each scheme.

    Re-coding a SNP negates its ``Z_j`` along with ``(gamma_hat, Gamma_hat)``,
    so every scheme shares the same selected set. Statistical failures are
    collected per scheme in ``errors`` rather than raised.
    """
    if selection is None:
        selection = rerandomized_select(pairs, cfg, stream)
    idx = selection.index
    base = pairs.subset(idx)
    base_sel = selection.subset(idx)
    out = MeiAnalysis(selection, {}, {}, None, {}, {}, {})
    for scheme in schemes:
        try:
            flips = orientation_flips(base, scheme)
            sub = base.flip(flips, scheme=scheme)
            sub_sel = base_sel.flip(flips)
            rb = rao_blackwell(sub.gamma_hat, sub.sigma_x, cfg, snp_ids=sub.snp_id)
            out.rb[scheme] = rb
            out.flips[scheme] = flips
            rv = rivw_estimate(sub, sub_sel, rb)
            out.rivw[scheme] = rv
            res = mei_statistic(sub, sub_sel, rb, rv, scheme)
            # report indices against the full table
            out.mei[scheme] = MeiResult(res.lambda_r, res.lambda_rc, res.v_hat, res.z_me, res.p_value,
                                        res.u_hat, scheme, res.beta_r_used, res.n_selected, idx, res.sigma_y)
        except StatisticalError as exc:
            out.errors[scheme] = exc
    if CodingScheme.MAJOR_ALLELE in out.mei and CodingScheme.NORMAL_ALLELE in out.mei:
        try:
            out.combined = combined_test(out.mei[CodingScheme.MAJOR_ALLELE], out.mei[CodingScheme.NORMAL_ALLELE])
        except StatisticalError as exc:
            out.errors["combined"] = exc
    return out

"""Summary-level simulation from a six-component mixture and replicate grids.

Components (per SNP, drawn independently):

    1  relevant, balanced pleiotropy       gamma ~ N(mu_x, tau_x2), alpha ~ N(0, tau_y2)
    2  relevant, no pleiotropy             gamma ~ N(mu_x, tau_x2), alpha = 0
    3  null, balanced pleiotropy           gamma = 0,               alpha ~ N(0, tau_y2)
    4  null                                gamma = 0,               alpha = 0
    5  directional pleiotropy              gamma ~ N(mu_x, tau_x2), alpha ~ N(mu_y, tau_y2)
    6  correlated pleiotropy               gamma ~ N(mu_x, tau_x2) + A, alpha ~ N(0, tau_y2) + A

with probabilities pi1*q, pi1*(1-q), pi2*q, pi2*(1-q), pi3*r, pi3*(1-r),
pi2 = 1 - pi1 - pi3 and a shared ``A ~ N(0, s2)`` per SNP. Effects are
redrawn for every replicate.
"""
from __future__ import annotations

import configparser
import dataclasses
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .egger import conventional_select, egger_fit
from .errors import ConfigError, StatisticalError
from .gwas_io import CodingScheme, PairTable, orient
from .mei import analyze, h1_expected_numerator
from .rivw import SelectionConfig
from .stats_dist import RngStream

log = logging.getLogger(__name__)

METHODS = ("mei_combined", "mei_major", "mei_normal", "ei")
THREADS_ENV = "MEITEST_THREADS"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    p_snps: int = 200_000
    pi1: float = 0.02
    pi3: float = 0.0
    q: float = 0.0
    r: float = 0.0
    mu_x: float = 0.0
    mu_y: float = 0.01
    tau_x2: float = 2e-5
    tau_y2: float = 2e-5
    s2: float = 2e-5
    n_x: float = 200_000
    n_y: float | None = None
    beta: float = 0.5
    lambda_ei: float = 5.45
    lambda_mei: float = 4.06
    eta: float = 0.5
    alpha_level: float = 0.05
    replicates: int = 1000
    sigma_x_override: float | None = None
    sigma_y_override: float | None = None

    def __post_init__(self):
        for name in ("pi1", "pi3", "q", "r"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{self.name}: {name} must lie in [0, 1], got {v}")
        if self.pi1 + self.pi3 > 1.0 + 1e-12:
            raise ConfigError(f"{self.name}: pi1 + pi3 exceeds 1")
        for name in ("tau_x2", "tau_y2", "s2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{self.name}: {name} must be nonnegative")
        if self.n_x < 1 or (self.n_y is not None and self.n_y < 1):
            raise ConfigError(f"{self.name}: sample sizes must be at least 1")
        if self.p_snps < 1:
            raise ConfigError(f"{self.name}: p_snps must be positive")
        if self.replicates < 1:
            raise ConfigError(f"{self.name}: replicates must be at least 1")
        if not (self.lambda_ei > 0 and self.lambda_mei > 0 and self.eta > 0):
            raise ConfigError(f"{self.name}: cutoffs and eta must be positive")
        if not 0.0 < self.alpha_level < 1.0:
            raise ConfigError(f"{self.name}: alpha_level must lie in (0, 1)")

    @property
    def pi2(self) -> float:
        return max(0.0, 1.0 - self.pi1 - self.pi3)

    @property
    def sigma_x(self) -> float:
        if self.sigma_x_override is not None:
            return self.sigma_x_override
        return 1.0 / math.sqrt(self.n_x)

    @property
    def sigma_y(self) -> float:
        if self.sigma_y_override is not None:
            return self.sigma_y_override
        n_y = self.n_x / 2 if self.n_y is None else self.n_y
        return 1.0 / math.sqrt(n_y)

    def component_probs(self) -> np.ndarray:
        return np.array([
            self.pi1 * self.q, self.pi1 * (1 - self.q),
            self.pi2 * self.q, self.pi2 * (1 - self.q),
            self.pi3 * self.r, self.pi3 * (1 - self.r),
        ])

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Effects:
    """True per-SNP effects; ``component`` holds the mixture tag 1-6."""

    gamma: np.ndarray
    alpha: np.ndarray
    component: np.ndarray

    def __len__(self):
        return len(self.gamma)


def sample_effects(cfg: ScenarioConfig, stream: RngStream) -> Effects:
    rng = stream.generator()
    p = cfg.p_snps
    cum = np.cumsum(cfg.component_probs())
    cum[-1] = max(cum[-1], 1.0)
    comp = (np.searchsorted(cum, rng.random(p), side="right") + 1).astype(np.int8)

    gamma = np.zeros(p)
    alpha = np.zeros(p)
    relevant = np.flatnonzero((comp == 1) | (comp == 2) | (comp == 5) | (comp == 6))
    gamma[relevant] = cfg.mu_x + math.sqrt(cfg.tau_x2) * rng.standard_normal(relevant.size)
    balanced = np.flatnonzero((comp == 1) | (comp == 3) | (comp == 6))
    alpha[balanced] = math.sqrt(cfg.tau_y2) * rng.standard_normal(balanced.size)
    directional = np.flatnonzero(comp == 5)
    alpha[directional] = cfg.mu_y + math.sqrt(cfg.tau_y2) * rng.standard_normal(directional.size)
    correlated = np.flatnonzero(comp == 6)
    shared = math.sqrt(cfg.s2) * rng.standard_normal(correlated.size)
    gamma[correlated] += shared
    alpha[correlated] += shared
    return Effects(gamma, alpha, comp)


def gen_summary(effects: Effects, cfg: ScenarioConfig, stream: RngStream) -> PairTable:
    """Noisy summary statistics, already in major-allele coding."""
    rng = stream.generator()
    p = len(effects)
    sx, sy = cfg.sigma_x, cfg.sigma_y
    gamma_hat = effects.gamma + sx * rng.standard_normal(p)
    Gamma_hat = cfg.beta * effects.gamma + effects.alpha + sy * rng.standard_normal(p)
    return PairTable.from_arrays(gamma_hat, sx, Gamma_hat, sy, scheme=CodingScheme.MAJOR_ALLELE)


@dataclass
class ReplicateRecord:
    """Per-replicate outcome. A ``None`` p-value means the method was skipped."""

    index: int
    p: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)
    n_sel_ei: int = 0
    n_sel_mei: int = 0
    kappa_hat: float = math.nan
    z_major: float = math.nan
    z_normal: float = math.nan
    lambda_rc_major: float = math.nan
    lambda_rc_normal: float = math.nan
    h1_major: float = math.nan
    h1_normal: float = math.nan
    beta_r: float = math.nan


def simulate_dataset(cfg: ScenarioConfig, stream: RngStream) -> tuple[Effects, PairTable]:
    effects = sample_effects(cfg, stream.substream(0))
    return effects, gen_summary(effects, cfg, stream.substream(1))


def run_replicate(cfg: ScenarioConfig, replicate_index: int, master_seed: int = 0) -> ReplicateRecord:
    stream = RngStream(master_seed, replicate_index)
    effects, pairs = simulate_dataset(cfg, stream)
    rec = ReplicateRecord(index=replicate_index)

    ei_set = conventional_select(pairs, cfg.lambda_ei)
    rec.n_sel_ei = len(ei_set)
    if len(ei_set) < 3:
        rec.skipped["ei"] = "too few instruments"
    else:
        try:
            rec.p["ei"] = egger_fit(orient(ei_set, CodingScheme.NORMAL_ALLELE)).p_value
        except StatisticalError as exc:
            rec.skipped["ei"] = type(exc).__name__

    sel_cfg = SelectionConfig(cfg.lambda_mei, cfg.eta)
    res = analyze(pairs, sel_cfg, stream.substream(2))
    idx = res.selection.index
    rec.n_sel_mei = len(idx)
    for scheme, key in ((CodingScheme.MAJOR_ALLELE, "mei_major"), (CodingScheme.NORMAL_ALLELE, "mei_normal")):
        if scheme in res.mei:
            m = res.mei[scheme]
            rec.p[key] = m.p_value
            flips = res.flips[scheme]
            sign = np.where(flips, -1.0, 1.0)
            h1 = h1_expected_numerator(sign * effects.gamma[idx], sign * effects.alpha[idx],
                                       pairs.sigma_y[idx]).expected_numerator
            if scheme is CodingScheme.MAJOR_ALLELE:
                rec.z_major, rec.lambda_rc_major, rec.h1_major = m.z_me, m.lambda_rc, h1
                rec.kappa_hat = res.rivw[scheme].kappa_hat
                rec.beta_r = res.rivw[scheme].beta_hat
            else:
                rec.z_normal, rec.lambda_rc_normal, rec.h1_normal = m.z_me, m.lambda_rc, h1
        else:
            exc = res.errors.get(scheme)
            rec.skipped[key] = type(exc).__name__ if exc is not None else "not computed"
    if res.combined is not None:
        rec.p["mei_combined"] = res.combined.p_value
    else:
        exc = res.errors.get("combined")
        rec.skipped["mei_combined"] = type(exc).__name__ if exc is not None else "component test skipped"
    return rec


@dataclass
class MethodSummary:
    rate: float
    se: float
    n_reject: int
    n_valid: int
    n_skipped: int


@dataclass
class ExperimentReport:
    scenario: str
    config: dict
    replicates: int
    methods: dict
    mean_n_sel_ei: float
    mean_n_sel_mei: float
    mean_kappa_hat: float
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "config": self.config,
            "replicates": self.replicates,
            "methods": {k: dataclasses.asdict(v) for k, v in self.methods.items()},
            "mean_n_sel_ei": self.mean_n_sel_ei,
            "mean_n_sel_mei": self.mean_n_sel_mei,
            "mean_kappa_hat": self.mean_kappa_hat,
            "warnings": list(self.warnings),
        }


def summarize_replicates(cfg: ScenarioConfig, records) -> ExperimentReport:
    """Aggregate replicate records; the result does not depend on record order."""
    records = sorted(records, key=lambda r: r.index)
    methods = {}
    warnings = []
    n = len(records)
    for m in METHODS:
        ps = [r.p[m] for r in records if m in r.p]
        n_valid = len(ps)
        n_reject = sum(1 for p in ps if p < cfg.alpha_level)
        rate = n_reject / n_valid if n_valid else math.nan
        se = math.sqrt(rate * (1 - rate) / n_valid) if n_valid else math.nan
        methods[m] = MethodSummary(rate, se, n_reject, n_valid, n - n_valid)
        if n and (n - n_valid) > 0.1 * n:
            warnings.append(f"{m}: {n - n_valid} of {n} replicates skipped")
    kappas = [r.kappa_hat for r in records if not math.isnan(r.kappa_hat)]
    return ExperimentReport(
        scenario=cfg.name,
        config=cfg.to_dict(),
        replicates=n,
        methods=methods,
        mean_n_sel_ei=float(np.mean([r.n_sel_ei for r in records])) if n else math.nan,
        mean_n_sel_mei=float(np.mean([r.n_sel_mei for r in records])) if n else math.nan,
        mean_kappa_hat=float(np.mean(kappas)) if kappas else math.nan,
        warnings=warnings,
    )


def _run_one(args):
    cfg, index, seed = args
    return run_replicate(cfg, index, seed)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_replicates(cfg: ScenarioConfig, master_seed: int, workers: int | None = None,
                   replicates: int | None = None) -> list[ReplicateRecord]:
    n = cfg.replicates if replicates is None else replicates
    workers = default_workers() if workers is None else workers
    jobs = [(cfg, i, master_seed) for i in range(n)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs, chunksize=max(1, n // (4 * workers))))


def run_experiment(grid, master_seed: int = 0, workers: int | None = None) -> list[ExperimentReport]:
    grid = list(grid)
    if not grid:
        raise ConfigError("scenario grid is empty")
    reports = []
    for cfg in grid:
        log.info("running %s (%d replicates)", cfg.name, cfg.replicates)
        reports.append(summarize_replicates(cfg, run_replicates(cfg, master_seed, workers)))
    return reports


# ---------------------------------------------------------------------------
# grid files

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def _coerce(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if "None" in kind and raw.lower() in ("", "none"):
        return None
    try:
        if kind.startswith("int"):
            return int(float(raw))
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_grid(text: str) -> list[ScenarioConfig]:
    """Scenario grid from INI text: one section per scenario, keys are config fields."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed grid file: {exc}") from None
    grid = []
    for section in cp.sections():
        kw = {"name": section}
        for key, raw in cp[section].items():
            if key not in _FIELD_TYPES or key == "name":
                raise ConfigError(f"[{section}] unknown key '{key}'")
            kw[key] = _coerce(key, raw)
        grid.append(ScenarioConfig(**kw))
    if not grid:
        raise ConfigError("grid file defines no scenarios")
    return grid


def load_grid(path) -> list[ScenarioConfig]:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_grid(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read grid file: {exc}") from None


def report_rows(reports) -> list[dict]:
    """One row per scenario x method, for TSV export."""
    rows = []
    for rep in reports:
        for m, s in rep.methods.items():
            rows.append({
                "scenario": rep.scenario, "method": m, "rate": s.rate, "se": s.se,
                "n_reject": s.n_reject, "n_valid": s.n_valid, "n_skipped": s.n_skipped,
                "mean_n_sel": rep.mean_n_sel_ei if m == "ei" else rep.mean_n_sel_mei,
                "mean_kappa_hat": rep.mean_kappa_hat,
            })
    return rows


def write_gwas_tables(pairs: PairTable, exposure_path, outcome_path, stream: RngStream) -> None:
    """Write a simulated table as a pair of exposure/outcome GWAS files.

    Effects are reported for the major allele (frequency drawn from
    U(0.5, 0.95)) with non-palindromic alleles, so major-allele orientation
    of the files reproduces ``pairs`` exactly.
    """
    rng = stream.generator()
    n = len(pairs)
    eaf = rng.uniform(0.5, 0.95, n)
    ids = pairs.ids()
    for path, beta, se in ((exposure_path, pairs.gamma_hat, pairs.sigma_x),
                           (outcome_path, pairs.Gamma_hat, pairs.sigma_y)):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("snp_id\teffect_allele\tother_allele\teaf\tbeta\tse\n")
            for j in range(n):
                fh.write(f"{ids[j]}\tA\tG\t{float(eaf[j])!r}\t{float(beta[j])!r}\t{float(se[j])!r}\n")

"""Reading, harmonizing and orienting two-sample GWAS summary statistics."""
from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, InputError, TableParseError

ALLELES = frozenset("ACGT")
_COMPLEMENT = {"A": "T", "T": "A", "C": "G", "G": "C"}

REQUIRED_ROLES = ("snp", "effect_allele", "other_allele", "beta", "se")
OPTIONAL_ROLES = ("eaf",)

# Header names recognised when no explicit column map is given (case-insensitive).
DEFAULT_ALIASES = {
    "snp": ("snp", "rsid", "snp_id", "snpid", "variant_id", "markername", "id"),
    "effect_allele": ("effect_allele", "ea", "a1", "alt", "allele1"),
    "other_allele": ("other_allele", "oa", "a2", "ref", "nea", "allele2"),
    "eaf": ("eaf", "effect_allele_frequency", "af", "freq", "a1freq", "frq"),
    "beta": ("beta", "b", "effect"),
    "se": ("se", "stderr", "standard_error", "sebeta"),
}

_MISSING = {"", "na", "nan", "."}


class CodingScheme(enum.Enum):
    MAJOR_ALLELE = "major"
    NORMAL_ALLELE = "normal"


class Orientation(enum.Enum):
    AS_GIVEN = "as_given"
    FLIPPED = "flipped"


@dataclass(frozen=True)
class SummaryRecord:
    snp_id: str
    effect_allele: str
    other_allele: str
    eaf: float | None
    beta: float
    se: float

    def __post_init__(self):
        if not self.snp_id:
            raise ValueError("snp_id must be nonempty")
        if self.effect_allele not in ALLELES or self.other_allele not in ALLELES:
            raise ValueError(f"{self.snp_id}: alleles must be one of A/C/G/T")
        if self.effect_allele == self.other_allele:
            raise ValueError(f"{self.snp_id}: effect and other allele are identical")
        if not (self.se > 0 and math.isfinite(self.se)):
            raise ValueError(f"{self.snp_id}: non-positive standard error")
        if not math.isfinite(self.beta):
            raise ValueError(f"{self.snp_id}: non-finite beta")
        if self.eaf is not None and not (0.0 <= self.eaf <= 1.0):
            raise ValueError(f"{self.snp_id}: eaf outside [0, 1]")


@dataclass(frozen=True)
class HarmonizedPair:
    snp_id: str
    gamma_hat: float
    sigma_x: float
    Gamma_hat: float
    sigma_y: float
    eaf_exposure: float | None = None
    orientation: Orientation = Orientation.AS_GIVEN
    eaf_outcome: float | None = None

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError(f"{self.snp_id}: standard errors must be positive")


# ---------------------------------------------------------------------------
# parsing


def _open_text(source) -> tuple[io.TextIOBase, bool]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), False
    if isinstance(source, io.TextIOBase):
        return source, False
    # binary stream
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def detect_delimiter(header_line: str) -> str | None:
    """Tab, then comma, then generic whitespace (returned as ``None``)."""
    if "\t" in header_line:
        return "\t"
    if "," in header_line:
        return ","
    return None


def _split(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return line.split()
    return next(csv.reader([line], delimiter=delimiter))


def resolve_columns(header: Sequence[str], column_map: Mapping[str, str] | None) -> dict[str, int]:
    """Map roles to header indices; explicit ``column_map`` entries take priority."""
    lowered = {name.strip().lower(): i for i, name in enumerate(header)}
    exact = {name.strip(): i for i, name in enumerate(header)}
    column_map = dict(column_map or {})
    unknown = set(column_map) - set(REQUIRED_ROLES) - set(OPTIONAL_ROLES)
    if unknown:
        raise ConfigError(f"unknown column role(s): {', '.join(sorted(unknown))}")
    out = {}
    for role in REQUIRED_ROLES + OPTIONAL_ROLES:
        if role in column_map:
            name = column_map[role]
            idx = exact.get(name, lowered.get(name.lower()))
            if idx is None:
                raise ConfigError(f"missing required column '{name}' (role {role})")
            out[role] = idx
            continue
        for alias in DEFAULT_ALIASES[role]:
            if alias in lowered:
                out[role] = lowered[alias]
                break
        else:
            if role in REQUIRED_ROLES:
                raise ConfigError(f"missing required column '{role}' (accepted headers: "
                                  f"{', '.join(DEFAULT_ALIASES[role])})")
    return out


def parse_summary_table(source, column_map: Mapping[str, str] | None = None,
                        delimiter: str | None = "auto") -> list[SummaryRecord]:
    """Parse a header-bearing delimited table into validated records.

    ``source`` may be a path, a text or binary stream, or raw bytes.
    ``delimiter="auto"`` picks tab, comma or whitespace from the header line;
    pass ``None`` to force whitespace splitting.

    Row problems (bad numbers, ``se <= 0``, invalid alleles, duplicate ids) are
    collected and raised together as :class:`TableParseError` with line numbers.
    """
    fh, owned = _open_text(source)
    try:
        lines = fh.read().splitlines()
    finally:
        if owned:
            fh.close()

    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    if start == len(lines):
        raise InputError("empty table: no header row")
    header_line = lines[start]
    if delimiter == "auto":
        delimiter = detect_delimiter(header_line)
    header = _split(header_line, delimiter)
    cols = resolve_columns(header, column_map)

    records: list[SummaryRecord] = []
    errors: list[tuple[int, str]] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(lines[start + 1:], start=start + 2):
        if not line.strip():
            continue
        fields = _split(line, delimiter)
        if len(fields) != len(header):
            errors.append((lineno, f"expected {len(header)} fields, found {len(fields)}"))
            continue
        try:
            rec = _row_to_record(fields, cols)
        except ValueError as exc:
            errors.append((lineno, str(exc)))
            continue
        if rec.snp_id in seen:
            errors.append((lineno, f"duplicate snp_id '{rec.snp_id}' (first seen on line {seen[rec.snp_id]})"))
            continue
        seen[rec.snp_id] = lineno
        records.append(rec)
    if errors:
        raise TableParseError(errors)
    return records


def _row_to_record(fields: Sequence[str], cols: Mapping[str, int]) -> SummaryRecord:
    snp = fields[cols["snp"]].strip()
    if not snp:
        raise ValueError("empty snp_id")
    ea = fields[cols["effect_allele"]].strip().upper()
    oa = fields[cols["other_allele"]].strip().upper()
    if ea not in ALLELES or oa not in ALLELES:
        raise ValueError(f"{snp}: unsupported alleles {ea}/{oa}")
    beta = _number(fields[cols["beta"]], "beta", snp)
    se = _number(fields[cols["se"]], "se", snp)
    if se <= 0:
        raise ValueError(f"{snp}: non-positive standard error")
    eaf = None
    if "eaf" in cols:
        raw = fields[cols["eaf"]].strip()
        if raw.lower() not in _MISSING:
            eaf = _number(raw, "eaf", snp)
    return SummaryRecord(snp, ea, oa, eaf, beta, se)


def _number(raw: str, name: str, snp: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ValueError(f"{snp}: non-numeric {name} '{raw.strip()}'") from None
    if not math.isfinite(value):
        raise ValueError(f"{snp}: non-finite {name}")
    return value


# ---------------------------------------------------------------------------
# harmonization


@dataclass
class HarmonizationReport:
    n_exposure: int = 0
    n_outcome: int = 0
    n_shared: int = 0
    kept: int = 0
    flipped: int = 0
    dropped: int = 0
    exclusions: list[dict] = field(default_factory=list)

    def exclude(self, snp_id: str, reason: str) -> None:
        self.dropped += 1
        self.exclusions.append({"snp_id": snp_id, "reason": reason})

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def is_palindromic(a1: str, a2: str) -> bool:
    return _COMPLEMENT[a1] == a2


def harmonize(exposure: Iterable[SummaryRecord], outcome: Iterable[SummaryRecord],
              palindromic_margin: float = 0.08) -> tuple[list[HarmonizedPair], HarmonizationReport]:
    """Align outcome effects to the exposure effect allele.

    SNPs are matched by id and returned in exposure order. Swapped alleles
    negate the outcome beta; strand-complemented alleles are accepted.
    Palindromic (A/T, C/G) SNPs are dropped when the exposure eaf lies within
    ``palindromic_margin`` of 0.5, and otherwise aligned by frequency agreement.
    """
    if not 0.0 <= palindromic_margin <= 0.5:
        raise ConfigError("palindromic_margin must lie in [0, 0.5]")
    exposure = list(exposure)
    out_by_id = {r.snp_id: r for r in outcome}
    report = HarmonizationReport(n_exposure=len(exposure), n_outcome=len(out_by_id))
    pairs: list[HarmonizedPair] = []
    for ex in exposure:
        oc = out_by_id.get(ex.snp_id)
        if oc is None:
            continue
        report.n_shared += 1
        swapped, reason = _match_alleles(ex, oc, palindromic_margin)
        if reason is not None:
            report.exclude(ex.snp_id, reason)
            continue
        Gamma = oc.beta
        eaf_out = oc.eaf
        if swapped:
            Gamma = -Gamma
            eaf_out = None if eaf_out is None else 1.0 - eaf_out
            report.flipped += 1
        report.kept += 1
        pairs.append(HarmonizedPair(ex.snp_id, ex.beta, ex.se, Gamma, oc.se,
                                    eaf_exposure=ex.eaf, eaf_outcome=eaf_out))
    if report.n_shared == 0:
        raise InputError("exposure and outcome tables share no SNP ids")
    if not pairs:
        raise InputError("no SNP survived harmonization")
    return pairs, report


def _match_alleles(ex: SummaryRecord, oc: SummaryRecord, margin: float) -> tuple[bool, str | None]:
    """Return ``(swapped, exclusion_reason)``."""
    e = (ex.effect_allele, ex.other_allele)
    o = (oc.effect_allele, oc.other_allele)
    o_comp = (_COMPLEMENT[o[0]], _COMPLEMENT[o[1]])
    if is_palindromic(*e):
        if {o[0], o[1]} != {e[0], e[1]}:
            return False, "allele mismatch"
        if ex.eaf is None:
            return False, "palindromic without exposure frequency"
        if abs(ex.eaf - 0.5) <= margin:
            return False, "palindromic ambiguous frequency"
        if oc.eaf is None:
            return False, "palindromic without outcome frequency"
        oc_eaf = oc.eaf if o == e else 1.0 - oc.eaf
        if abs(oc_eaf - 0.5) <= margin:
            return False, "palindromic ambiguous frequency"
        same_side = (ex.eaf - 0.5) * (oc_eaf - 0.5) > 0
        # o == e: agreeing frequencies mean same strand; o swapped: the reverse.
        return (o != e) if same_side else (o == e), None
    if o == e or o_comp == e:
        return False, None
    if o[::-1] == e or o_comp[::-1] == e:
        return True, None
    return False, "allele mismatch"


# ---------------------------------------------------------------------------
# columnar view used by the statistical modules


@dataclass(frozen=True)
class PairTable:
    """Columnar set of harmonized pairs.

    ``flipped`` records orientation relative to the as-ingested coding and
    ``scheme`` the coding scheme the table is known to be in (``None`` if
    not oriented). ``snp_id`` may be ``None`` for synthetic data.
    """

    gamma_hat: np.ndarray
    sigma_x: np.ndarray
    Gamma_hat: np.ndarray
    sigma_y: np.ndarray
    eaf: np.ndarray
    flipped: np.ndarray
    snp_id: np.ndarray | None = None
    scheme: CodingScheme | None = None

    def __post_init__(self):
        n = len(self.gamma_hat)
        for name in ("sigma_x", "Gamma_hat", "sigma_y", "eaf", "flipped"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has length {len(getattr(self, name))}, expected {n}")
        if self.snp_id is not None and len(self.snp_id) != n:
            raise ValueError("snp_id length mismatch")

    @classmethod
    def from_arrays(cls, gamma_hat, sigma_x, Gamma_hat, sigma_y, eaf=None, snp_id=None,
                    scheme: CodingScheme | None = None) -> "PairTable":
        g = np.asarray(gamma_hat, dtype=float)
        n = g.shape[0]
        sx = np.broadcast_to(np.asarray(sigma_x, dtype=float), (n,)).copy()
        sy = np.broadcast_to(np.asarray(sigma_y, dtype=float), (n,)).copy()
        e = np.full(n, np.nan) if eaf is None else np.asarray(eaf, dtype=float)
        ids = None if snp_id is None else np.asarray(snp_id, dtype=object)
        return cls(g, sx, np.asarray(Gamma_hat, dtype=float), sy, e, np.zeros(n, dtype=bool), ids, scheme)

    @classmethod
    def from_pairs(cls, pairs: Sequence[HarmonizedPair]) -> "PairTable":
        return cls(
            gamma_hat=np.array([p.gamma_hat for p in pairs], dtype=float),
            sigma_x=np.array([p.sigma_x for p in pairs], dtype=float),
            Gamma_hat=np.array([p.Gamma_hat for p in pairs], dtype=float),
            sigma_y=np.array([p.sigma_y for p in pairs], dtype=float),
            eaf=np.array([np.nan if p.eaf_exposure is None else p.eaf_exposure for p in pairs], dtype=float),
            flipped=np.array([p.orientation is Orientation.FLIPPED for p in pairs], dtype=bool),
            snp_id=np.array([p.snp_id for p in pairs], dtype=object),
        )

    def __len__(self) -> int:
        return len(self.gamma_hat)

    def ids(self) -> np.ndarray:
        if self.snp_id is not None:
            return self.snp_id
        return np.array([f"snp{j + 1}" for j in range(len(self))], dtype=object)

    def to_pairs(self) -> list[HarmonizedPair]:
        ids = self.ids()
        return [
            HarmonizedPair(
                str(ids[j]), float(self.gamma_hat[j]), float(self.sigma_x[j]),
                float(self.Gamma_hat[j]), float(self.sigma_y[j]),
                None if np.isnan(self.eaf[j]) else float(self.eaf[j]),
                Orientation.FLIPPED if self.flipped[j] else Orientation.AS_GIVEN,
            )
            for j in range(len(self))
        ]

    def subset(self, index) -> "PairTable":
        ids = None if self.snp_id is None else self.snp_id[index]
        return PairTable(self.gamma_hat[index], self.sigma_x[index], self.Gamma_hat[index],
                         self.sigma_y[index], self.eaf[index], self.flipped[index], ids, self.scheme)

    def flip(self, mask, scheme: CodingScheme | None = None) -> "PairTable":
        """Re-code the SNPs in ``mask`` to the other allele."""
        mask = np.asarray(mask, dtype=bool)
        sign = np.where(mask, -1.0, 1.0)
        return replace(
            self,
            gamma_hat=self.gamma_hat * sign,
            Gamma_hat=self.Gamma_hat * sign,
            eaf=np.where(mask, 1.0 - self.eaf, self.eaf),
            flipped=self.flipped ^ mask,
            scheme=scheme,
        )

    def write_tsv(self, path_or_buf) -> None:
        ids = self.ids()
        rows = ["\t".join(("snp_id", "gamma_hat", "sigma_x", "Gamma_hat", "sigma_y",
                           "eaf_exposure", "orientation"))]
        for j in range(len(self)):
            eaf = "NA" if np.isnan(self.eaf[j]) else repr(float(self.eaf[j]))
            orient_ = (Orientation.FLIPPED if self.flipped[j] else Orientation.AS_GIVEN).value
            rows.append("\t".join((str(ids[j]), repr(float(self.gamma_hat[j])), repr(float(self.sigma_x[j])),
                                   repr(float(self.Gamma_hat[j])), repr(float(self.sigma_y[j])), eaf, orient_)))
        _write_text(path_or_buf, "\n".join(rows) + "\n")


def read_pairs_tsv(source) -> PairTable:
    """Read a table written by :meth:`PairTable.write_tsv`."""
    fh, owned = _open_text(source)
    try:
        reader = csv.DictReader(fh, delimiter="\t")
        rows = list(reader)
    finally:
        if owned:
            fh.close()
    if not rows:
        raise InputError("harmonized table is empty")
    try:
        table = PairTable.from_arrays(
            [float(r["gamma_hat"]) for r in rows], [float(r["sigma_x"]) for r in rows],
            [float(r["Gamma_hat"]) for r in rows], [float(r["sigma_y"]) for r in rows],
            eaf=[np.nan if r["eaf_exposure"].lower() in _MISSING else float(r["eaf_exposure"]) for r in rows],
            snp_id=[r["snp_id"] for r in rows],
        )
    except (KeyError, ValueError) as exc:
        raise InputError(f"malformed harmonized table: {exc}") from None
    flipped = np.array([r.get("orientation", "as_given") == Orientation.FLIPPED.value for r in rows])
    if np.any(table.sigma_x <= 0) or np.any(table.sigma_y <= 0):
        raise InputError("harmonized table contains non-positive standard errors")
    return replace(table, flipped=flipped)


def _write_text(path_or_buf, text: str) -> None:
    if isinstance(path_or_buf, (str, os.PathLike)):
        with open(path_or_buf, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        path_or_buf.write(text)


# ---------------------------------------------------------------------------
# orientation


def orientation_flips(table: PairTable, scheme: CodingScheme) -> np.ndarray:
    """Boolean mask of SNPs that ``orient`` would re-code."""
    if scheme is CodingScheme.NORMAL_ALLELE:
        return table.gamma_hat < 0
    missing = np.isnan(table.eaf)
    if missing.any() and table.scheme is not CodingScheme.MAJOR_ALLELE:
        bad = table.ids()[missing]
        shown = ", ".join(map(str, bad[:10])) + (" ..." if len(bad) > 10 else "")
        raise ConfigError(f"major-allele coding needs eaf_exposure; missing for {len(bad)} SNP(s): {shown}")
    # eaf == 0.5 is left as given; SNPs without eaf in a major-coded table are already major.
    return np.where(missing, False, table.eaf < 0.5)


def orient(pairs, scheme: CodingScheme):
    """Re-code every SNP to the allele chosen by ``scheme``.

    Accepts a :class:`PairTable` or a list of :class:`HarmonizedPair` and
    returns the same kind. Standard errors and ids are never touched.
    """
    if isinstance(pairs, PairTable):
        return pairs.flip(orientation_flips(pairs, scheme), scheme=scheme)
    table = PairTable.from_pairs(list(pairs))
    return table.flip(orientation_flips(table, scheme), scheme=scheme).to_pairs()

"""Normal distribution helpers, bivariate normal probabilities and seedable streams.

Univariate functions wrap ``scipy.special`` (``ndtr``, ``ndtri``, ``log_ndtr``).
The bivariate orthant probability follows Genz's BVNU routine (Drezner and
Wesolowsky's single-integral form with fixed-order Gauss-Legendre rules plus
an asymptotic expansion for |rho| >= 0.925).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

_UINT64_MAX = 2**64 - 1
_TWO_PI = 2.0 * math.pi

# Gauss-Legendre half-rules on [-1, 1] (positive abscissae only); orders 6, 12, 20.
_GL = {
    6: (
        np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970]),
        np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904]),
    ),
    12: (
        np.array([0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                  0.5873179542866171, 0.3678314989981802, 0.1252334085114692]),
        np.array([0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                  0.2031674267230659, 0.2334925365383547, 0.2491470458134029]),
    ),
    20: (
        np.array([0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                  0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                  0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                  0.07652652113349733]),
        np.array([0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                  0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
                  0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
                  0.1527533871307259]),
    ),
}


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(_TWO_PI)
    return out if out.ndim else float(out)


def norm_cdf(x):
    out = special.ndtr(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def norm_sf(x):
    """Upper tail ``1 - Phi(x)``, accurate far into the right tail."""
    out = special.ndtr(-np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def log_norm_cdf(x):
    out = special.log_ndtr(np.asarray(x, dtype=float))
    return out if np.ndim(out) else float(out)


def norm_quantile(p):
    p = np.asarray(p, dtype=float)
    if np.any(np.isnan(p)) or np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("norm_quantile requires 0 < p < 1")
    out = special.ndtri(p)
    return out if out.ndim else float(out)


def two_sided_pvalue(z):
    """``2 * (1 - Phi(|z|))`` computed from the upper tail."""
    out = 2.0 * special.ndtr(-np.abs(np.asarray(z, dtype=float)))
    return out if np.ndim(out) else float(out)


def lambda_from_pvalue(p_two_sided: float) -> float:
    """Selection cutoff ``lambda`` matching a two-sided p-value threshold.

    Equal to ``norm_quantile(1 - p/2)`` but evaluated as ``-ndtri(p/2)`` so that
    genome-wide thresholds such as 5e-8 keep full precision.

    >>> round(lambda_from_pvalue(5e-8), 4)
    5.4513
    """
    p = float(p_two_sided)
    if not (0.0 < p < 1.0):
        raise ValueError(f"p-value threshold must lie in (0, 1), got {p_two_sided!r}")
    return float(-special.ndtri(0.5 * p))


def _phid(x: float) -> float:
    return float(special.ndtr(x))


def bvn_upper(h: float, k: float, rho: float) -> float:
    """``P(W1 > h, W2 > k)`` for a standard bivariate normal with correlation ``rho``."""
    if math.isnan(h) or math.isnan(k) or math.isnan(rho):
        raise ValueError("bvn_upper: NaN input")
    if abs(rho) > 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return 1.0 if k == -math.inf else _phid(-k)
    if k == -math.inf:
        return _phid(-h)
    if rho == 0.0:
        return _phid(-h) * _phid(-k)

    ar = abs(rho)
    order = 6 if ar < 0.3 else (12 if ar < 0.75 else 20)
    xh, wh = _GL[order]
    x = np.concatenate([1.0 - xh, 1.0 + xh])
    w = np.concatenate([wh, wh])
    hk = h * k
    bvn = 0.0

    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(rho)
        sn = np.sin(asr * x)
        bvn = float(np.dot(np.exp((sn * hk - hs) / (1.0 - sn * sn)), w))
        bvn = bvn * asr / _TWO_PI + _phid(-h) * _phid(-k)
        return min(1.0, max(0.0, bvn))

    if rho < 0.0:
        k = -k
        hk = -hk
    if ar < 1.0:
        a_s = 1.0 - rho * rho
        a = math.sqrt(a_s)
        bs = (h - k) ** 2
        asr = -0.5 * (bs / a_s + hk)
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        if asr > -100.0:
            bvn = a * math.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s)
        if hk > -100.0:
            b = math.sqrt(bs)
            sp = math.sqrt(_TWO_PI) * _phid(-b / a)
            bvn -= math.exp(-0.5 * hk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
        a *= 0.5
        xs = (a * x) ** 2
        asr_v = -0.5 * (bs / xs + hk)
        keep = asr_v > -100.0
        xs = xs[keep]
        sp_v = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-0.5 * hk * xs / (1.0 + rs) ** 2) / rs
        bvn = (a * float(np.dot(np.exp(asr_v[keep]) * (sp_v - ep), w[keep])) - bvn) / _TWO_PI

    if rho > 0.0:
        bvn += _phid(-max(h, k))
    elif h >= k:
        bvn = -bvn
    else:
        L = _phid(k) - _phid(h) if h < 0.0 else _phid(-h) - _phid(-k)
        bvn = L - bvn
    return min(1.0, max(0.0, bvn))


def bvn_cdf(x1: float, x2: float, rho: float) -> float:
    """``P(W1 <= x1, W2 <= x2)``."""
    return bvn_upper(-x1, -x2, rho)


def bvn_rect_prob(lo1: float, hi1: float, lo2: float, hi2: float, rho: float) -> float:
    """Probability that a standard bivariate normal falls in ``[lo1, hi1] x [lo2, hi2]``."""
    vals = (lo1, hi1, lo2, hi2, rho)
    if any(math.isnan(v) for v in vals):
        raise ValueError("bvn_rect_prob: NaN input")
    if lo1 > hi1 or lo2 > hi2:
        raise ValueError("bvn_rect_prob requires lo <= hi on both axes")
    if abs(rho) > 1.0:
        raise ValueError(f"correlation must lie in [-1, 1], got {rho}")
    if abs(rho) > 1.0 - 1e-12:
        # W2 = sign(rho) * W1: intersect the first interval with the mapped second one.
        if rho > 0:
            a, b = max(lo1, lo2), min(hi1, hi2)
        else:
            a, b = max(lo1, -hi2), min(hi1, -lo2)
        if a >= b:
            return 0.0
        return min(1.0, max(0.0, _phid(b) - _phid(a)))
    p = (bvn_upper(lo1, lo2, rho) - bvn_upper(hi1, lo2, rho)
         - bvn_upper(lo1, hi2, rho) + bvn_upper(hi1, hi2, rho))
    return min(1.0, max(0.0, p))


def bvn_max_abs_sf(z: float, rho: float) -> float:
    """``P(max(|W1|, |W2|) > z)``, i.e. ``1 - bvn_rect_prob(-z, z, -z, z, rho)``.

    Evaluated from the tail pieces so that small p-values are not lost to
    cancellation against 1.
    """
    if math.isnan(z) or math.isnan(rho):
        raise ValueError("bvn_max_abs_sf: NaN input")
    z = abs(z)
    if abs(rho) > 1.0 - 1e-12:
        return min(1.0, 2.0 * _phid(-z))
    # P(|W1|>z, |W2|>z) = 2 [U(z, z, rho) + U(z, z, -rho)]
    both = 2.0 * (bvn_upper(z, z, rho) + bvn_upper(z, z, -rho))
    return min(1.0, max(0.0, 4.0 * _phid(-z) - both))


@dataclass(frozen=True)
class RngStream:
    """Value-type handle on a reproducible random stream.

    A stream is identified by ``(seed, stream_id)`` plus an optional path of
    sub-stream indices. Each call to :meth:`generator` returns a fresh Philox
    (counter-based) generator positioned at the start of the stream, so the
    draw sequence depends only on the key and never on thread scheduling.
    Normal variates come from numpy's ziggurat sampler.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (0 <= int(v) <= _UINT64_MAX):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v}")
        if any(int(i) < 0 for i in self.path):
            raise ValueError("sub-stream indices must be nonnegative")

    def substream(self, index: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),) + tuple(self.path))
        return np.random.Generator(np.random.Philox(ss))


def draw_normal(stream: RngStream, mean=0.0, sd=1.0, size=None):
    """Normal draws from the start of ``stream``; ``sd == 0`` returns ``mean`` exactly."""
    sd_arr = np.asarray(sd, dtype=float)
    if np.any(np.isnan(sd_arr)) or np.any(sd_arr < 0):
        raise ValueError("standard deviation must be nonnegative")
    z = stream.generator().standard_normal(size)
    out = mean + sd_arr * z
    return out if np.ndim(out) else float(out)

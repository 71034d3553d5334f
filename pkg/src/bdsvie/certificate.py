"""Admissible (theta, a), the contraction factor and the stitching partition.

With squared Lipschitz constants C (in y, z for f; in y for g) and alpha (in
z for g), the Picard map on an interval of length L contracts in the
e^{at}-weighted norm with factor

    Lambda = max(L * C * (1/theta + 1), C/theta + alpha)

whenever C/(1 - alpha) < theta < a and L < theta / (C (1 + theta)).
Arithmetic runs in exact rationals so that e.g. C=1, alpha=1/2, theta=3,
L=1/2 yields exactly the float nearest 5/6.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction

SAFETY = Fraction(9, 10)


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class ContractionCertificate:
    C: float
    alpha: float
    theta: float
    a: float
    lambda_factor: float
    max_step: float
    partition: tuple  # T = S_0 > S_1 > ... > S_q = 0

    @property
    def intervals(self):
        return list(zip(self.partition[1:], self.partition[:-1]))

    @property
    def max_interval(self) -> float:
        return max(hi - lo for lo, hi in self.intervals)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["partition"] = list(self.partition)
        out["max_step"] = None if math.isinf(self.max_step) else self.max_step
        out["n_intervals"] = len(self.partition) - 1
        return out


def contraction_factor(C, alpha, theta, length) -> float:
    C, alpha, theta, length = map(Fraction, (C, alpha, theta, length))
    return float(max(length * C * (1 / theta + 1), C / theta + alpha))


def step_bound(C, theta) -> float:
    """Largest admissible interval length theta / (C (1 + theta)); inf when C = 0."""
    C, theta = Fraction(C), Fraction(theta)
    return math.inf if C == 0 else float(theta / (C * (1 + theta)))


def violations(cert: ContractionCertificate) -> list:
    """Messages for every certificate invariant that fails (empty when valid)."""
    C, alpha, theta, a = map(Fraction, (cert.C, cert.alpha, cert.theta, cert.a))
    out = []
    if not 0 < alpha < 1:
        out.append("alpha must lie strictly inside (0,1)")
        return out
    if not theta > C / (1 - alpha):
        out.append(f"theta={cert.theta} must exceed C/(1-alpha)={float(C / (1 - alpha))}")
    if not a > theta:
        out.append(f"a={cert.a} must exceed theta={cert.theta}")
    part = [Fraction(p) for p in cert.partition]
    if len(part) < 2 or part[-1] != 0 or any(hi <= lo for hi, lo in zip(part, part[1:])):
        out.append("partition must decrease strictly from T to 0")
        return out
    longest = max(hi - lo for hi, lo in zip(part, part[1:]))
    if C > 0 and theta > 0 and not longest < theta / (C * (1 + theta)):
        out.append(f"interval length {float(longest)} must be below theta/(C(1+theta))={cert.max_step}")
    if not cert.lambda_factor < 1:
        out.append(f"contraction factor {cert.lambda_factor} is not below 1")
    return out


def _grid_points(Tq, bound, n_intervals, grid_steps):
    """Fewest near-equal intervals with endpoints on the grid that respect the step bound."""
    dt = Tq / grid_steps
    for n in range(n_intervals, grid_steps + 1):
        idx = sorted({round(Fraction(grid_steps * k, n)) for k in range(n + 1)}, reverse=True)
        if bound is None or max(hi - lo for hi, lo in zip(idx, idx[1:])) * dt < bound:
            return [i * dt for i in idx]
    raise CertificateError(f"grid step {float(dt)} is not below theta/(C(1+theta)) = {float(bound)}")


def build_certificate(C: float, alpha: float, T: float, theta: float | None = None,
                      a: float | None = None, partition=None, n_intervals: int | None = None,
                      grid_steps: int | None = None) -> ContractionCertificate:
    """Defaults: theta = 2C/(1-alpha) (1 when C = 0), a = 2 theta, equal intervals of
    length at most min(0.9 theta/(C(1+theta)), T).

    ``partition`` (decreasing, T down to 0) or ``n_intervals`` force the
    stitch points; the strict inequalities are checked either way. With
    ``grid_steps`` the default stitch points are snapped to that uniform grid,
    adding intervals when rounding would break the step bound.
    """
    if not 0 < alpha < 1:
        raise CertificateError("alpha must lie strictly inside (0,1)")
    if C < 0:
        raise CertificateError("C must be nonnegative")
    if not T > 0:
        raise CertificateError("T must be positive")
    Cq, aq_alpha, Tq = Fraction(C), Fraction(alpha), Fraction(T)
    if theta is None:
        th = 2 * Cq / (1 - aq_alpha) if Cq > 0 else Fraction(1)
    else:
        th = Fraction(theta)
    if not th > Cq / (1 - aq_alpha) or th <= 0:
        raise CertificateError(f"theta={float(th)} violates C/(1-alpha) < theta "
                               f"(C/(1-alpha)={float(Cq / (1 - aq_alpha))})")
    aw = 2 * th if a is None else Fraction(a)
    if not aw > th:
        raise CertificateError(f"a={float(aw)} violates theta < a (theta={float(th)})")
    bound = None if Cq == 0 else th / (Cq * (1 + th))

    if partition is not None:
        points = [Fraction(p) for p in partition]
        if points[0] != Tq or points[-1] != 0 or any(hi <= lo for hi, lo in zip(points, points[1:])):
            raise CertificateError("partition must decrease strictly from T to 0")
    else:
        if n_intervals is None:
            length = Tq if bound is None else min(SAFETY * bound, Tq)
            n_intervals = math.ceil(Tq / length)
        if n_intervals < 1:
            raise CertificateError("need at least one interval")
        if grid_steps is None:
            points = [Tq - p * Tq / n_intervals for p in range(n_intervals + 1)]
        else:
            points = _grid_points(Tq, bound, n_intervals, grid_steps)
    longest = max(hi - lo for hi, lo in zip(points, points[1:]))
    if bound is not None and not longest < bound:
        raise CertificateError(f"interval length {float(longest)} violates T-S < theta/(C(1+theta))"
                               f" = {float(bound)}")
    lam = max(longest * Cq * (1 / th + 1), Cq / th + aq_alpha)
    cert = ContractionCertificate(
        C=float(C), alpha=float(alpha), theta=float(th), a=float(aw),
        lambda_factor=float(lam),
        max_step=math.inf if bound is None else float(bound),
        partition=tuple(float(p) for p in points),
    )
    # the stored values are rounded to floats; they must still satisfy every inequality
    problems = violations(cert)
    if problems:
        raise CertificateError("; ".join(problems))
    return cert

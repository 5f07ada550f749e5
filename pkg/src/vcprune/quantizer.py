"""Fixed-point weight quantization and the quantized-classifier VC-bound check.

A format (T, F) has one sign bit and T-1 magnitude bits, F of them after the
binary point, so representable values are m * 2**-F with integer
|m| <= 2**(T-1) - 1 (sign-magnitude, symmetric range). Only weights and
biases are quantized; inputs and activations stay in float64.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .network import MLP, accuracy, classifier_inputs
from .objective import RegularizerSpec, full_objective, vc_gamma


class Rounding(str, Enum):
    TOWARD_ZERO = "toward_zero"
    NEAREST = "nearest"


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int
    frac_bits: int
    rounding: Rounding = Rounding.TOWARD_ZERO

    def __post_init__(self):
        object.__setattr__(self, "rounding", Rounding(self.rounding))
        if not 2 <= self.total_bits <= 16:
            raise ValueError(f"total_bits {self.total_bits} outside [2, 16]")
        if not 0 <= self.frac_bits <= self.total_bits - 1:
            raise ValueError(f"frac_bits {self.frac_bits} outside [0, {self.total_bits - 1}]")

    @property
    def resolution(self) -> float:
        return math.ldexp(1.0, -self.frac_bits)

    @property
    def max_code(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def max_magnitude(self) -> float:
        return math.ldexp(float(self.max_code), -self.frac_bits)

    @property
    def theorem_safe(self) -> bool:
        """Truncation never grows a magnitude or flips a sign; rounding to nearest can."""
        return self.rounding is Rounding.TOWARD_ZERO


def quantize_codes(x, fmt: FixedPointFormat) -> np.ndarray:
    """Signed integer codes m with quantize_value(x) == m * 2**-F."""
    x = np.asarray(x, dtype=np.float64)
    scaled = np.ldexp(np.abs(x), fmt.frac_bits)
    mag = np.floor(scaled)
    if fmt.rounding is Rounding.NEAREST:
        # half away from zero; the fractional part is exact for |scaled| < 2**52
        with np.errstate(invalid="ignore"):  # inf - inf; saturates below anyway
            mag = mag + (scaled - mag >= 0.5)
    mag = np.minimum(mag, fmt.max_code)
    return np.sign(x) * mag


def quantize_value(x, fmt: FixedPointFormat):
    """Map ``x`` (scalar or array) onto the fixed-point grid of ``fmt``."""
    q = np.ldexp(quantize_codes(x, fmt), -fmt.frac_bits)
    # -0.0 and 0.0 are the same code
    q = q + 0.0
    return float(q) if np.ndim(q) == 0 else q


def quantize_model(model: MLP, fmt: FixedPointFormat) -> MLP:
    q = model.copy()
    for layer in q.layers:
        layer.weights = quantize_value(layer.weights, fmt)
        layer.biases = quantize_value(layer.biases, fmt)
    return q


def margin(weights) -> float:
    """2 / ||w||^2 over all classifier-layer weights."""
    sq = float(np.sum(np.square(np.asarray(weights, dtype=np.float64))))
    if sq == 0.0:
        raise ValueError("margin undefined for an all-zero weight vector")
    return 2.0 / sq


def frac_bit_candidates(total_bits: int, lo: int = 3, hi: int = 15) -> list[int]:
    """Fraction bits to try for ``total_bits``.

    The usual 3..15 range is intersected with the feasible 0..T-1; when that
    leaves nothing (T <= 3) every feasible value is tried instead.
    """
    feasible = range(0, total_bits)
    cands = [f for f in range(lo, hi + 1) if f in feasible]
    return cands or list(feasible)


@dataclass(frozen=True)
class FracBitsChoice:
    frac_bits: int
    accuracy: float
    within_tolerance: bool
    tried: tuple[tuple[int, float], ...] = ()


def search_frac_bits(model: MLP, data, total_bits: int, tolerance: float = 0.01,
                     rounding: Rounding = Rounding.TOWARD_ZERO,
                     reference_acc: float | None = None) -> FracBitsChoice:
    """Brute-force the fraction bits for ``total_bits``; best accuracy wins, ties go to larger F."""
    if not 2 <= total_bits <= 16:
        raise ValueError(f"total_bits {total_bits} outside [2, 16]")
    if reference_acc is None:
        reference_acc = accuracy(model, data)
    tried = []
    for f in frac_bit_candidates(total_bits):
        fmt = FixedPointFormat(total_bits, f, rounding)
        tried.append((f, accuracy(quantize_model(model, fmt), data)))
    best_f, best_acc = max(tried, key=lambda t: (t[1], t[0]))
    return FracBitsChoice(best_f, best_acc, best_acc >= reference_acc - tolerance, tuple(tried))


# -- Theorem 1: quantization does not increase the VC bound -------------------

@dataclass(frozen=True)
class AugmentedClassifier:
    """Hyperplane(s) u = [w; b] acting on samples augmented with a constant 1."""

    u: np.ndarray
    u_q: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=np.float64))
        u_q = np.atleast_2d(np.asarray(self.u_q, dtype=np.float64))
        if u.shape != u_q.shape:
            raise ValueError(f"u has shape {u.shape} but u_q has {u_q.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "u_q", u_q)

    @classmethod
    def from_layer(cls, weights, biases, fmt: FixedPointFormat) -> "AugmentedClassifier":
        u = np.column_stack([np.atleast_2d(weights), np.atleast_1d(biases)])
        return cls(u, quantize_value(u, fmt))

    @property
    def delta(self) -> np.ndarray:
        return self.u - self.u_q


def augment(X) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return np.column_stack([X, np.ones(X.shape[0])])


def signed_targets(labels, n_rows: int) -> np.ndarray:
    """±1 targets, shape (n_rows, M): binary labels for one row, one-vs-rest for K rows."""
    labels = np.asarray(labels)
    if n_rows == 1:
        return np.where(labels > 0, 1.0, -1.0)[None, :]
    return np.where(labels[None, :] == np.arange(n_rows)[:, None], 1.0, -1.0)


@dataclass(frozen=True)
class TheoremCheck:
    condition_holds: bool
    gamma: float
    gamma_q: float
    label_preserved: bool
    separable_q: bool

    @property
    def bound_guaranteed(self) -> bool:
        """All hypotheses under which gamma_q <= gamma is provable hold."""
        return self.condition_holds and self.label_preserved and self.separable_q


def theorem1_check(clf: AugmentedClassifier, data, C: float = 1.0) -> TheoremCheck:
    """Check the quantized classifier against the full-precision one on ``data``.

    ``data`` holds un-augmented samples (a Dataset, or a (features, labels)
    pair); the constant-1 column is appended here.

    * ``condition_holds``: every |u_q_j| <= |u_j| with no sign flip.
    * ``label_preserved``: y_i * (u - u_q) . x_i >= 0 for every sample.
    * ``separable_q``: y_i * u_q . x_i >= 0 for every sample.

    The three together imply 0 <= y u_q.x <= y u.x per sample and
    ||u_q|| <= ||u||, hence gamma_q <= gamma. The condition on |u_j| alone
    does not: u = [1, -1], u_q = [1, -0.5] on x = [1, 0.5] grows (u.x)^2.
    """
    if hasattr(data, "features"):
        X, labels = data.features, data.labels
    else:
        X, labels = data
    Xa = augment(X)
    u, u_q = clf.u, clf.u_q
    if Xa.shape[1] != u.shape[1]:
        raise ValueError(f"classifier length {u.shape[1]} != augmented sample length {Xa.shape[1]}")
    Y = signed_targets(labels, u.shape[0])

    cond = bool(np.all((np.abs(u_q) <= np.abs(u)) & ((u_q == 0) | (np.sign(u_q) == np.sign(u)))))
    label_preserved = bool(np.all(Y * (Xa @ clf.delta.T).T >= 0))
    separable_q = bool(np.all(Y * (Xa @ u_q.T).T >= 0))
    gamma = vc_gamma(u, 0.0, Xa, C)
    gamma_q = vc_gamma(u_q, 0.0, Xa, C)
    return TheoremCheck(cond, gamma, gamma_q, label_preserved, separable_q)


# -- bit-width sweep ----------------------------------------------------------

CURVE_COLUMNS = ("T", "F", "acc", "margin", "loss", "gamma", "gamma_q", "cond")


@dataclass(frozen=True)
class QuantRow:
    total_bits: int | None  # None is the full-precision baseline
    frac_bits: int | None
    accuracy: float
    select_accuracy: float
    margin: float
    loss: float
    gamma: float
    gamma_q: float
    condition_holds: bool
    within_tolerance: bool


@dataclass(eq=False)
class QuantReport:
    baseline: QuantRow
    rows: list[QuantRow] = field(default_factory=list)
    rounding: Rounding = Rounding.TOWARD_ZERO

    def row(self, total_bits: int) -> QuantRow:
        for r in self.rows:
            if r.total_bits == total_bits:
                return r
        raise KeyError(total_bits)

    def smallest_within_tolerance(self) -> QuantRow | None:
        ok = [r for r in self.rows if r.within_tolerance]
        return min(ok, key=lambda r: r.total_bits) if ok else None

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(CURVE_COLUMNS)
        for r in [self.baseline, *self.rows]:
            writer.writerow([
                "inf" if r.total_bits is None else r.total_bits,
                "" if r.frac_bits is None else r.frac_bits,
                repr(float(r.accuracy)), repr(float(r.margin)), repr(float(r.loss)),
                repr(float(r.gamma)), repr(float(r.gamma_q)), int(r.condition_holds),
            ])
        return out.getvalue()


def _safe_margin(weights) -> float:
    try:
        return margin(weights)
    except ValueError:
        return math.inf


def bits_sweep(model: MLP, select_data, tolerance: float = 0.01, report_data=None,
               spec: RegularizerSpec | None = None, gamma_C: float = 1.0,
               rounding: Rounding = Rounding.TOWARD_ZERO,
               bits=range(16, 1, -1)) -> QuantReport:
    """Quantize at T = 16..2 bits, choosing F on ``select_data`` for each T.

    Accuracy and loss are measured on ``report_data`` (defaults to
    ``select_data``); pass the test set as both to pick F on the reported split.
    ``loss`` is the mean-form objective under ``spec`` (hinge only by
    default). Gamma values use the classifier layer on the full-precision
    network's classifier inputs, so the two differ only by the quantized
    classifier weights.
    """
    if report_data is None:
        report_data = select_data
    spec = spec or RegularizerSpec()
    z_report = classifier_inputs(model, report_data.features)
    Xa = augment(z_report)
    clf = model.classifier
    u = np.column_stack([clf.weights, clf.biases])
    gamma = vc_gamma(u, 0.0, Xa, gamma_C)

    def loss_of(m):
        return full_objective(m, report_data, spec, 1.0 / report_data.n_samples).total

    select_ref = accuracy(model, select_data)
    baseline = QuantRow(None, None, accuracy(model, report_data), select_ref,
                        _safe_margin(clf.weights), loss_of(model), gamma, gamma, True, True)
    report = QuantReport(baseline, rounding=Rounding(rounding))
    for t in bits:
        choice = search_frac_bits(model, select_data, t, tolerance, rounding, select_ref)
        fmt = FixedPointFormat(t, choice.frac_bits, rounding)
        qm = quantize_model(model, fmt)
        qclf = AugmentedClassifier.from_layer(clf.weights, clf.biases, fmt)
        check = theorem1_check(qclf, (z_report, report_data.labels), gamma_C)
        report.rows.append(QuantRow(
            t, choice.frac_bits, accuracy(qm, report_data), choice.accuracy,
            _safe_margin(qm.classifier.weights), loss_of(qm), check.gamma, check.gamma_q,
            check.condition_holds, choice.within_tolerance,
        ))
    return report


def quantized_compression_ratio(nonzeros_before: int, nonzeros_after: int, total_bits: int) -> float:
    """(32 * nonzeros before) / (T * nonzeros after), against float32 storage."""
    if nonzeros_after == 0:
        return float(32 * nonzeros_before)
    return (32 * nonzeros_before) / (total_bits * nonzeros_after)

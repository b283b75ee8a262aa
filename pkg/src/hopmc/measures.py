"""Morphological-computation measures over discretized sensorimotor data.

Two aggregate measures are computed from the aligned (w', w, s, a) symbol
sequences of one behavior:

* ``mc_w``   -- the conditional mutual information I(W';W|A): how much the
  previous world state tells about the next one beyond what the action
  already determines.  Zero iff the world dynamics collapse to p(w'|a).
* ``mc_mi``  -- behavior complexity minus controller complexity,
  I(W';W) - I(A;S), assembled from the four entropies
  H(W') - H(W'|W) - H(A) + H(A|S).

Both have state-dependent counterparts: per-step log-ratio contributions
whose arithmetic mean over the trace equals the aggregate value.  Note the
w-part of the per-step ``mc_mi`` contribution is log2 p(w'|w) - log2 p(w');
this orientation is what makes the mean reproduce I(W';W) - I(A;S).

Every queried tuple was observed, so all involved conditional probabilities
are strictly positive and the state series are finite by construction.

For exactly deterministic symbolic systems (w' = f(w,a), a = g(s), s = h(w))
the conditional entropy of W' given W vanishes, hence I(W';A|W) = 0, and
MC_W - MC_MI equals H(A|W').  On discretized physical data both identities
hold only approximately because binning introduces apparent stochasticity;
``deterministic_diagnostics`` reports the two residuals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .discretize import DiscreteTrace
from .infotheory import (
    SparseJoint,
    conditional_entropy,
    conditional_mutual_information,
    entropy,
    estimate_joint,
)

__all__ = [
    "MeasureResult",
    "Diagnostics",
    "mc_w",
    "mc_w_state",
    "mc_mi",
    "mc_mi_state",
    "deterministic_diagnostics",
    "moving_average",
    "compute_measures",
]


@dataclass(frozen=True)
class MeasureResult:
    """Aggregate measures and their component entropies for one behavior."""

    model: str
    mc_w: float
    mc_mi: float
    h_wnext: float
    h_wnext_given_w: float
    h_a: float
    h_a_given_s: float
    i_wnext_a_given_w: float
    h_a_given_wnext: float
    residual: float       # mc_w - mc_mi - H(A|W'); ~0 for deterministic data


class Diagnostics(NamedTuple):
    i_wnext_a_given_w: float
    residual: float


def _joint_wwa(d: DiscreteTrace) -> SparseJoint:
    return estimate_joint([d.w_next, d.w, d.a])


def mc_w(d: DiscreteTrace) -> float:
    """I(W';W|A) in bits over the empirical (w', w, a) joint."""
    if len(d) == 0:
        raise ValueError("empty discrete trace")
    return conditional_mutual_information(_joint_wwa(d), (0,), (1,), (2,))


def _lookup(counts: dict, keys: list[tuple[int, ...]]) -> np.ndarray:
    return np.array([counts[k] for k in keys], dtype=float)


def mc_w_state(d: DiscreteTrace) -> np.ndarray:
    """Per-step contribution log2 [p(w'|w,a) / p(w'|a)]; mean equals mc_w."""
    if len(d) == 0:
        raise ValueError("empty discrete trace")
    joint = _joint_wwa(d)
    c_wwa = joint.counts
    c_wa = joint.marginal_counts((1, 2))
    c_wna = joint.marginal_counts((0, 2))
    c_a = joint.marginal_counts((2,))
    wn, w, a = (x.tolist() for x in (d.w_next, d.w, d.a))
    num = _lookup(c_wwa, list(zip(wn, w, a))) * _lookup(c_a, [(v,) for v in a])
    den = _lookup(c_wa, list(zip(w, a))) * _lookup(c_wna, list(zip(wn, a)))
    return np.log2(num / den)


def mc_mi(d: DiscreteTrace) -> float:
    """I(W';W) - I(A;S) in bits, assembled from the four entropy terms."""
    return compute_measures(d).mc_mi


def mc_mi_state(d: DiscreteTrace) -> np.ndarray:
    """Per-step contribution whose mean equals ``mc_mi``:
    log2 p(w'|w) - log2 p(w') + log2 p(a) - log2 p(a|s)."""
    if len(d) == 0:
        raise ValueError("empty discrete trace")
    n = float(len(d))
    joint_ww = estimate_joint([d.w_next, d.w])
    joint_as = estimate_joint([d.a, d.s])
    c_ww = joint_ww.counts
    c_w = joint_ww.marginal_counts((1,))
    c_wn = joint_ww.marginal_counts((0,))
    c_as = joint_as.counts
    c_s = joint_as.marginal_counts((1,))
    c_a = joint_as.marginal_counts((0,))
    wn, w, a, s = (x.tolist() for x in (d.w_next, d.w, d.a, d.s))
    world = np.log2(_lookup(c_ww, list(zip(wn, w))) * n /
                    (_lookup(c_w, [(v,) for v in w]) * _lookup(c_wn, [(v,) for v in wn])))
    ctrl = np.log2(_lookup(c_a, [(v,) for v in a]) *
                   _lookup(c_s, [(v,) for v in s]) /
                   (_lookup(c_as, list(zip(a, s))) * n))
    return world + ctrl


def deterministic_diagnostics(d: DiscreteTrace) -> Diagnostics:
    """I(W';A|W) and the residual MC_W - MC_MI - H(A|W').

    Both vanish on exactly deterministic symbolic data; on binned physical
    data they quantify the stochasticity introduced by discretization.
    """
    res = compute_measures(d)
    return Diagnostics(res.i_wnext_a_given_w, res.residual)


def moving_average(x: np.ndarray, block: int = 5) -> np.ndarray:
    """Centered moving average; the window shrinks at the boundaries so the
    output has the input's length.  Block size must be odd."""
    if block < 1:
        raise ValueError("block must be >= 1")
    if block % 2 == 0:
        raise ValueError(f"block must be odd, got {block}")
    x = np.asarray(x, dtype=float)
    n = x.size
    half = (block - 1) // 2
    idx = np.arange(n)
    lo = np.maximum(0, idx - half)
    hi = np.minimum(n, idx + half + 1)
    csum = np.concatenate(([0.0], np.cumsum(x)))
    return (csum[hi] - csum[lo]) / (hi - lo)


def compute_measures(d: DiscreteTrace) -> MeasureResult:
    """All aggregate quantities for one discrete trace."""
    if len(d) == 0:
        raise ValueError("empty discrete trace")
    joint_wwa = _joint_wwa(d)
    joint_ww = estimate_joint([d.w_next, d.w])
    joint_as = estimate_joint([d.a, d.s])
    joint_awn = estimate_joint([d.a, d.w_next])

    mcw = conditional_mutual_information(joint_wwa, (0,), (1,), (2,))
    h_wnext = entropy(joint_ww, (0,))
    h_wnext_given_w = conditional_entropy(joint_ww, (0,), (1,))
    h_a = entropy(joint_as, (0,))
    h_a_given_s = conditional_entropy(joint_as, (0,), (1,))
    mcmi = h_wnext - h_wnext_given_w - h_a + h_a_given_s
    i_wa_g_w = conditional_mutual_information(joint_wwa, (0,), (2,), (1,))
    h_a_given_wnext = conditional_entropy(joint_awn, (0,), (1,))

    return MeasureResult(
        model=d.model,
        mc_w=mcw,
        mc_mi=mcmi,
        h_wnext=h_wnext,
        h_wnext_given_w=h_wnext_given_w,
        h_a=h_a,
        h_a_given_s=h_a_given_s,
        i_wnext_a_given_w=i_wa_g_w,
        h_a_given_wnext=h_a_given_wnext,
        residual=mcw - mcmi - h_a_given_wnext,
    )

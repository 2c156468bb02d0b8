"""Backend selection and contraction plans for the truncated flows.

The single hot operation of the whole package is the sparse trilinear
contraction behind every right-hand-side evaluation, O(N^3) rows per call
and millions of calls per ensemble study.  A compiled extension provides it
when built; a pure-numpy mirror with identical semantics is selected at
import time when the extension is unavailable or CRLAB_FORCE_NUMPY is set.

A ContractionPlan unfolds a canonical CouplingTensor into flat accumulation
rows with every per-mode cutoff factor folded into the row weight, so the
inner loops touch nothing but five aligned arrays.
"""

import os
from dataclasses import dataclass

import numpy as np

if os.environ.get("CRLAB_FORCE_NUMPY"):
    from . import _kernels_py as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        from . import _kernels_py as _impl

        BACKEND = "numpy"


def backend_name():
    """Which kernel implementation this process is using."""
    return BACKEND


@dataclass
class ContractionPlan:
    """Flat accumulation rows of one projected flow.

    Right-hand-side rows: out <- w * c[in1] * c[in2] * conj(c[conj]), where w
    already carries the input-pair multiplicity and the four cutoff-profile
    factors of the stored entry.  The within-pair symmetry of the tensor is
    unfolded: an entry with n3 < n4 appears twice, once per output mode.

    Pairing rows keep the canonical entries with their full multiplicity for
    evaluating the quartic form sum(w_full * c c conj(c) conj(c)).
    """

    n_modes: int
    order: str
    in1: np.ndarray
    in2: np.ndarray
    conj: np.ndarray
    out: np.ndarray
    w: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h3: np.ndarray
    h4: np.ndarray
    h_w: np.ndarray

    def __len__(self):
        return len(self.w)


def build_plan(tensor, mode_weights=None, order="gathered"):
    """Unfold a CouplingTensor into a ContractionPlan.

    mode_weights: per-mode multipliers chi_n (length cutoff+1) folded into
    every row as chi_{n1} chi_{n2} chi_{n3} chi_{n4}; None keeps the stored
    weights bitwise untouched (a sharp projector on matching data is a
    no-op by construction).  Rows whose folded weight is exactly zero are
    dropped, so fully cut-off modes never enter the inner loops.

    order: "gathered" sorts rows by output mode, "resonance-sum" by
    n1 + n2; both must produce the same contraction to rounding, which the
    tests assert.
    """
    if order not in ("gathered", "resonance-sum"):
        raise ValueError(f"unknown plan order {order!r}")
    n_modes = tensor.cutoff + 1
    idx = tensor.indices.astype(np.int64)
    weights = tensor.weights
    if mode_weights is not None:
        chi = np.asarray(mode_weights, dtype=np.float64)
        if chi.shape != (n_modes,):
            raise ValueError("mode_weights length must be cutoff + 1")
        weights = weights * chi[idx[:, 0]] * chi[idx[:, 1]] * chi[idx[:, 2]] * chi[idx[:, 3]]
    m12 = 1.0 + (idx[:, 0] < idx[:, 1])
    swap = idx[:, 2] < idx[:, 3]

    in1 = np.concatenate([idx[:, 0], idx[swap, 0]])
    in2 = np.concatenate([idx[:, 1], idx[swap, 1]])
    cj = np.concatenate([idx[:, 2], idx[swap, 3]])
    out = np.concatenate([idx[:, 3], idx[swap, 2]])
    w = np.concatenate([m12 * weights, m12[swap] * weights[swap]])

    live = w != 0.0
    in1, in2, cj, out, w = in1[live], in2[live], cj[live], out[live], w[live]
    if order == "gathered":
        perm = np.lexsort((in1, in2, cj, out))
    else:
        perm = np.lexsort((in1, cj, out, in1 + in2))

    m34 = 1.0 + swap
    h_w = m12 * m34 * weights
    h_live = h_w != 0.0

    u32 = np.uint32
    return ContractionPlan(
        n_modes=n_modes,
        order=order,
        in1=np.ascontiguousarray(in1[perm], dtype=u32),
        in2=np.ascontiguousarray(in2[perm], dtype=u32),
        conj=np.ascontiguousarray(cj[perm], dtype=u32),
        out=np.ascontiguousarray(out[perm], dtype=u32),
        w=np.ascontiguousarray(w[perm], dtype=np.float64),
        h1=np.ascontiguousarray(idx[h_live, 0], dtype=u32),
        h2=np.ascontiguousarray(idx[h_live, 1], dtype=u32),
        h3=np.ascontiguousarray(idx[h_live, 2], dtype=u32),
        h4=np.ascontiguousarray(idx[h_live, 3], dtype=u32),
        h_w=np.ascontiguousarray(h_w[h_live], dtype=np.float64),
    )


def rhs_apply(plan, c, out=None):
    """Trilinear contraction sum_{n1+n2-n3=n} w c_{n1} c_{n2} conj(c_{n3}).

    Returns the plain sum; dynamics multiplies by -i.  c must be a
    contiguous complex128 vector of length plan.n_modes.
    """
    if out is None:
        out = np.zeros(plan.n_modes, dtype=np.complex128)
    else:
        out[:] = 0.0
    _impl.rhs_core(plan.w, plan.in1, plan.in2, plan.conj, plan.out, c, out)
    return out


def pairing_apply(plan, c):
    """Quartic form sum over all ordered quadruples, as a complex number."""
    return _impl.hamiltonian_core(plan.h_w, plan.h1, plan.h2, plan.h3, plan.h4, c)

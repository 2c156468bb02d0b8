"""Pure-numpy mirrors of the compiled contraction kernels.

Same call signatures and accumulation semantics as the extension module;
kernels.py picks whichever imports.  The scatter-add goes through bincount,
which is order-independent, so both entry orderings agree here to rounding.
"""

import numpy as np


def rhs_core(w, i1, i2, ic, io, c, out):
    """Accumulate out[io] += w * c[i1] * c[i2] * conj(c[ic]) over all rows."""
    terms = w * (c[i1] * c[i2] * np.conj(c[ic]))
    idx = np.asarray(io, dtype=np.intp)
    out += np.bincount(idx, weights=terms.real, minlength=len(out))
    out += 1j * np.bincount(idx, weights=terms.imag, minlength=len(out))
    return out


def hamiltonian_core(w, a, b, c, d, cvec):
    """Quartic pairing sum(w * c_a c_b conj(c_c c_d)) as a complex number."""
    return complex(np.sum(w * (cvec[a] * cvec[b] * np.conj(cvec[c] * cvec[d]))))

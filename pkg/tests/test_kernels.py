"""Contraction kernels against a brute-force reference."""

import subprocess
import sys

import numpy as np
import pytest

from crlab.basis import HOLOMORPHIC, eigenspace
from crlab.coupling import alpha_hol, build_tensor
from crlab.kernels import backend_name, build_plan, pairing_apply, rhs_apply


def brute_rhs(c, cutoff, weight):
    out = np.zeros(cutoff + 1, dtype=np.complex128)
    for n1 in range(cutoff + 1):
        for n2 in range(cutoff + 1):
            for n3 in range(cutoff + 1):
                n = n1 + n2 - n3
                if 0 <= n <= cutoff:
                    out[n] += weight(n1, n2, n3, n) * c[n1] * c[n2] * np.conj(c[n3])
    return out


def brute_quartic(c, cutoff, weight):
    total = 0.0 + 0.0j
    for n1 in range(cutoff + 1):
        for n2 in range(cutoff + 1):
            for n3 in range(cutoff + 1):
                n4 = n1 + n2 - n3
                if 0 <= n4 <= cutoff:
                    total += weight(n1, n2, n3, n4) * c[n1] * c[n2] * np.conj(c[n3]) * np.conj(c[n4])
    return total


def random_state(cutoff, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(cutoff + 1) + 1j * rng.standard_normal(cutoff + 1)
    return np.ascontiguousarray(c, dtype=np.complex128)


def test_backend_name_valid():
    assert backend_name() in ("compiled", "numpy")


def test_rhs_matches_brute_force_holomorphic():
    cutoff = 7
    tensor = build_tensor(HOLOMORPHIC, cutoff)
    plan = build_plan(tensor)
    c = random_state(cutoff, seed=3)
    got = rhs_apply(plan, c)
    want = brute_rhs(c, cutoff, alpha_hol)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_pairing_matches_brute_force():
    cutoff = 6
    tensor = build_tensor(HOLOMORPHIC, cutoff)
    plan = build_plan(tensor)
    c = random_state(cutoff, seed=5)
    got = pairing_apply(plan, c)
    want = brute_quartic(c, cutoff, alpha_hol)
    assert abs(got - want) < 1e-11 * abs(want)
    assert abs(got.imag) < 1e-12 * abs(got.real)


def test_mode_weights_scale_inputs_and_outputs():
    cutoff = 5
    tensor = build_tensor(HOLOMORPHIC, cutoff)
    chi = np.linspace(1.0, 0.25, cutoff + 1)
    plan = build_plan(tensor, mode_weights=chi)
    c = random_state(cutoff, seed=1)
    got = rhs_apply(plan, c)
    want = chi * brute_rhs(chi * c, cutoff, alpha_hol)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_eigenspace_plan_contracts():
    # no convolution constraint inside one eigenspace: sum over all stored
    # quadruples, with both index pairs unordered
    tensor = build_tensor(eigenspace(3), 3)
    plan = build_plan(tensor)
    c = random_state(3, seed=2)

    def w(n1, n2, n3, n4):
        rows = tensor.indices
        a, b = sorted((n1, n2)), sorted((n3, n4))
        hit = np.all(rows == np.array(a + b, dtype=rows.dtype), axis=1)
        if hit.any():
            return float(tensor.weights[hit][0])
        return 0.0

    want = np.zeros(4, dtype=np.complex128)
    for n1 in range(4):
        for n2 in range(4):
            for n3 in range(4):
                for n4 in range(4):
                    want[n4] += w(n1, n2, n3, n4) * c[n1] * c[n2] * np.conj(c[n3])
    got = rhs_apply(plan, c)
    assert np.allclose(got, want, rtol=1e-10, atol=1e-12)


def test_rhs_bitwise_deterministic():
    tensor = build_tensor(HOLOMORPHIC, 10)
    plan = build_plan(tensor)
    c = random_state(10, seed=9)
    a = rhs_apply(plan, c)
    b = rhs_apply(plan, c)
    assert np.array_equal(a, b)


def test_numpy_fallback_agrees_with_active_backend():
    # run the same contraction in a subprocess with the fallback forced
    cutoff = 8
    tensor = build_tensor(HOLOMORPHIC, cutoff)
    plan = build_plan(tensor)
    c = random_state(cutoff, seed=11)
    here = rhs_apply(plan, c)

    code = (
        "import numpy as np\n"
        "from crlab.basis import HOLOMORPHIC\n"
        "from crlab.coupling import build_tensor\n"
        "from crlab.kernels import backend_name, build_plan, rhs_apply\n"
        "assert backend_name() == 'numpy'\n"
        f"tensor = build_tensor(HOLOMORPHIC, {cutoff})\n"
        "plan = build_plan(tensor)\n"
        f"rng = np.random.default_rng(11)\n"
        f"c = rng.standard_normal({cutoff + 1}) + 1j * rng.standard_normal({cutoff + 1})\n"
        "out = rhs_apply(plan, np.ascontiguousarray(c, dtype=np.complex128))\n"
        "np.save('OUT', out)\n"
    )
    import os
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        env = dict(os.environ, CRLAB_FORCE_NUMPY="1")
        subprocess.run([sys.executable, "-c", code.replace("OUT", os.path.join(tmp, "out.npy"))],
                       check=True, env=env, cwd=tmp)
        there = np.load(os.path.join(tmp, "out.npy"))
    assert np.allclose(here, there, rtol=1e-13, atol=1e-13)

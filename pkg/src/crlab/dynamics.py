"""Truncated flows of the resonant system.

The flow on spectral coefficients is i dc_n/dt = sum_{n1+n2-n3=n}
w(n1,n2,n3,n) c_{n1} c_{n2} conj(c_{n3}), truncated either sharply (all
stored modes kept as-is) or smoothly (every mode damped by a cutoff profile
chi(lambda_n/lambda_N), folded into the interaction weights so the truncated
system is itself the Hamiltonian flow of the projected quartic form).  The
flow conserves mass sum |c_n|^2, energy sum lambda_n |c_n|^2, and the quartic
form itself; the integrators monitor all three rather than enforcing them.

Default integrator: embedded adaptive Runge-Kutta 5(4) at rel-tol 1e-10,
which resolves finite-time flows far below the statistical resolution of the
ensemble experiments.  An implicit midpoint rule (fixed step, symplectic) is
available for long-time drift studies.  Time reversal integrates with a
negative span; nothing is conjugated.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import kernels
from .basis import (
    BasisFamily,
    GridResolutionError,
    build_laguerre_rule,
    build_quadrature,
    default_grid,
    eval_basis,
    family_from_label,
    hermite_polyparts,
    laguerre_weighted,
)

__all__ = [
    "CoefficientState",
    "IntegratorConfig",
    "Projector",
    "cutoff_profile",
    "FlowKernel",
    "EvolveResult",
    "ConservationLog",
    "rhs",
    "evolve",
    "mass",
    "energy",
    "hamiltonian",
    "sobolev_norm",
    "eval_field",
    "propagate_linear",
    "spacetime_l4",
    "state_to_dict",
    "state_from_dict",
]


@dataclass
class CoefficientState:
    """Spectral coefficients c_0..c_N of one family at one time.

    A value type: operations return new states and never mutate their inputs.
    """

    family: BasisFamily
    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        c = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 1 or len(c) == 0:
            raise ValueError("coefficients must form a nonempty 1D vector")
        if not np.all(np.isfinite(c.view(np.float64))):
            raise ValueError("non-finite coefficient")
        if self.family.kind == "eigenspace" and len(c) != self.family.level + 1:
            raise ValueError(
                f"eigenspace({self.family.level}) states have exactly "
                f"{self.family.level + 1} coefficients"
            )
        self.coeffs = c
        self.time = float(self.time)

    @property
    def cutoff(self):
        return len(self.coeffs) - 1

    def copy(self):
        return CoefficientState(self.family, self.coeffs.copy(), self.time)


@dataclass(frozen=True)
class IntegratorConfig:
    """Time integration parameters.

    method "adaptive-rk" is an embedded 5(4) pair with PI-free step control;
    "implicit-midpoint" is a fixed-step symplectic rule whose step is
    max_step (must be finite there).
    """

    method: str = "adaptive-rk"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf

    def __post_init__(self):
        if self.method not in ("adaptive-rk", "implicit-midpoint"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.method == "implicit-midpoint" and not math.isfinite(self.max_step):
            raise ValueError("implicit-midpoint needs a finite max_step as its step size")


def cutoff_profile(x):
    """Smooth cutoff chi: 1 on [-1/2, 1/2], 0 outside (-1, 1), quintic
    smoothstep between, so chi is C^2 and monotone on each side."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    s = np.clip(2.0 * (x - 0.5), 0.0, 1.0)
    out = 1.0 - s ** 3 * (6.0 * s * s - 15.0 * s + 10.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Projector:
    """Sharp or smooth spectral truncation at a cutoff mode.

    Sharp keeps every stored mode untouched (the identity on states that
    already live below the cutoff).  Smooth multiplies mode n by
    chi(lambda_n / lambda_cutoff); the top mode sits at ratio 1 where chi
    vanishes, so it is frozen by the projected flow.
    """

    kind: str
    cutoff: int

    def __post_init__(self):
        if self.kind not in ("sharp", "smooth"):
            raise ValueError(f"unknown projector kind {self.kind!r}")
        if self.cutoff < 0:
            raise ValueError("cutoff must be >= 0")

    def weights(self, family):
        """Per-mode multipliers for modes 0..cutoff."""
        n = np.arange(self.cutoff + 1)
        if self.kind == "sharp":
            return np.ones(self.cutoff + 1)
        ratio = family.eigenvalue(n) / family.eigenvalue(self.cutoff)
        return cutoff_profile(ratio)

    def apply(self, state):
        """Project a state (new state; sharp returns an identical copy)."""
        if state.cutoff != self.cutoff:
            raise ValueError("projector cutoff does not match the state")
        if self.kind == "sharp":
            return state.copy()
        return CoefficientState(state.family, state.coeffs * self.weights(state.family), state.time)


def _require_match(state, tensor, proj=None):
    if state.family != tensor.family:
        raise ValueError(
            f"state family {state.family.label} does not match tensor {tensor.family.label}"
        )
    if state.cutoff != tensor.cutoff:
        raise ValueError(
            f"state has {state.cutoff + 1} modes, tensor cutoff is {tensor.cutoff}"
        )
    if proj is not None and proj.cutoff != tensor.cutoff:
        raise ValueError("projector cutoff does not match the tensor")


class FlowKernel:
    """One projected flow, prepared for repeated evaluation.

    Holds the unfolded contraction plan with the projector's profile folded
    into the weights, so rhs() and the conserved quartic form are single
    kernel calls.  Build once per (tensor, projector) and reuse across an
    ensemble; everything here is read-only after construction.
    """

    def __init__(self, tensor, projector, order="gathered"):
        if projector.cutoff != tensor.cutoff:
            raise ValueError("projector cutoff does not match the tensor")
        self.tensor = tensor
        self.projector = projector
        self.family = tensor.family
        self.n_modes = tensor.cutoff + 1
        chi = None if projector.kind == "sharp" else projector.weights(tensor.family)
        self.plan = kernels.build_plan(tensor, chi, order=order)
        self.eigenvalues = np.asarray(tensor.family.eigenvalue(np.arange(self.n_modes)))

    def contraction(self, c, out=None):
        return kernels.rhs_apply(self.plan, c, out)

    def rhs(self, c):
        """-i times the projected trilinear sum."""
        return -1j * self.contraction(c)

    def hamiltonian(self, c):
        """The projected quartic form (the flow's conserved Hamiltonian)."""
        value = kernels.pairing_apply(self.plan, c)
        if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
            raise RuntimeError(f"quartic form imaginary residual {value.imag:.3e}")
        return value.real

    def conserved(self, c):
        """(mass, energy, hamiltonian) triple for the log."""
        actions = c.real ** 2 + c.imag ** 2
        return float(actions.sum()), float(self.eigenvalues @ actions), self.hamiltonian(c)

    def evolve(self, coeffs, span, config=None, observer=None):
        """Integrate the coefficient vector over a time span (either sign).

        observer(t, c) is called at t=0 and after every accepted step.
        Returns the final coefficient vector (a new array).
        """
        config = config or IntegratorConfig()
        c = np.array(coeffs, dtype=np.complex128)
        if span == 0.0:
            if observer is not None:
                observer(0.0, c)
            return c
        if not math.isfinite(span):
            raise ValueError("time span must be finite")
        if config.method == "implicit-midpoint":
            return _implicit_midpoint(self.rhs, c, span, config, observer)
        return _dopri5(self.rhs, c, span, config, observer)


# Dormand-Prince 5(4) tableau
_DP_C = (0.2, 0.3, 0.8, 8.0 / 9.0, 1.0)
_DP_A = (
    (0.2,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
)
_DP_B = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0)
# b - bhat: weights of the embedded error estimate (k7 = f(y_new) included)
_DP_E = (
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


def _error_norm(delta, c0, c1, rel_tol, abs_tol):
    scale = abs_tol + rel_tol * np.maximum(np.abs(c0), np.abs(c1))
    return float(np.sqrt(np.mean((np.abs(delta) / scale) ** 2)))


def _initial_step(fun, c0, f0, direction, rel_tol, abs_tol, remaining):
    """Standard curvature-probing choice of the first trial step."""
    scale = abs_tol + rel_tol * np.abs(c0)
    d0 = math.sqrt(float(np.mean((np.abs(c0) / scale) ** 2)))
    d1 = math.sqrt(float(np.mean((np.abs(f0) / scale) ** 2)))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = fun(c0 + h0 * direction * f0)
    d2 = math.sqrt(float(np.mean((np.abs(f1 - f0) / scale) ** 2))) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, remaining)


def _dopri5(fun, c, span, config, observer):
    t = 0.0
    t_end = span
    direction = 1.0 if span > 0 else -1.0
    if observer is not None:
        observer(t, c)
    k = [None] * 7
    k[0] = fun(c)
    h = min(_initial_step(fun, c, k[0], direction, config.rel_tol, config.abs_tol, abs(span)),
            config.max_step)
    rejected = False
    while (t_end - t) * direction > 0:
        h = min(h, abs(t_end - t))
        if h < 16 * np.finfo(float).eps * max(abs(t), abs(t_end)) or h == 0.0:
            raise RuntimeError(f"step size underflow at t={t:.6g}")
        hs = h * direction
        for i in range(5):
            acc = _DP_A[i][0] * k[0]
            for j in range(1, i + 1):
                acc = acc + _DP_A[i][j] * k[j]
            k[i + 1] = fun(c + hs * acc)
        c_new = c + hs * (
            _DP_B[0] * k[0] + _DP_B[2] * k[2] + _DP_B[3] * k[3] + _DP_B[4] * k[4] + _DP_B[5] * k[5]
        )
        k[6] = fun(c_new)
        if not np.all(np.isfinite(c_new.view(np.float64))):
            raise RuntimeError(f"state became non-finite during step at t={t:.6g}")
        delta = hs * (
            _DP_E[0] * k[0] + _DP_E[2] * k[2] + _DP_E[3] * k[3] + _DP_E[4] * k[4]
            + _DP_E[5] * k[5] + _DP_E[6] * k[6]
        )
        err = _error_norm(delta, c, c_new, config.rel_tol, config.abs_tol)
        if err <= 1.0:
            t = t_end if abs(t_end - t) <= h * (1 + 1e-12) else t + hs
            c = c_new
            k[0] = k[6]  # first stage of the next step equals the last of this one
            if observer is not None:
                observer(t, c)
            factor = 10.0 if err == 0.0 else min(10.0, 0.9 * err ** -0.2)
            if rejected:
                factor = min(factor, 1.0)
            rejected = False
        else:
            factor = max(0.2, 0.9 * err ** -0.2)
            rejected = True
        h = min(h * factor, config.max_step)
    return c


def _implicit_midpoint(fun, c, span, config, observer):
    if observer is not None:
        observer(0.0, c)
    n_steps = max(1, math.ceil(abs(span) / config.max_step))
    h = span / n_steps
    t = 0.0
    for _ in range(n_steps):
        mid = c + (h / 2.0) * fun(c)
        for _ in range(100):
            nxt = c + (h / 2.0) * fun(mid)
            shift = float(np.max(np.abs(nxt - mid)))
            mid = nxt
            if shift <= 1e-14 * (1.0 + float(np.max(np.abs(mid)))):
                break
        else:
            raise RuntimeError("implicit midpoint iteration failed to converge; reduce max_step")
        c = 2.0 * mid - c
        if not np.all(np.isfinite(c.view(np.float64))):
            raise RuntimeError(f"state became non-finite during step at t={t:.6g}")
        t += h
        if observer is not None:
            observer(t, c)
    return c


@dataclass
class ConservationLog:
    """Mass, energy, and quartic-form values at accepted integrator steps.

    The quartic form logged is the one the flow actually conserves: the
    projector's profile is folded in, so with a smooth truncation this is
    the projected Hamiltonian.
    """

    times: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    hamiltonian: np.ndarray

    def relative_drift(self):
        """Max |q(t) - q(0)| / max(|q(0)|, tiny) per conserved quantity."""
        out = {}
        for name in ("mass", "energy", "hamiltonian"):
            q = getattr(self, name)
            ref = max(abs(float(q[0])), np.finfo(float).tiny)
            out[name] = float(np.max(np.abs(q - q[0])) / ref)
        return out


@dataclass
class EvolveResult:
    state: CoefficientState
    log: ConservationLog
    snapshots: list = field(default_factory=list)


def rhs(state, tensor, proj):
    """-i times the projected trilinear sum at the state's coefficients."""
    _require_match(state, tensor, proj)
    return FlowKernel(tensor, proj).rhs(state.coeffs)


def evolve(state, tensor, proj, t, config=None, checkpoints=None):
    """Integrate the truncated flow over a time span t (either sign).

    Returns an EvolveResult: the state at state.time + t, a ConservationLog
    sampled at every accepted step, and, when checkpoints (offsets from the
    start, sorted, within [0, t] or [t, 0]) are given, the state snapshot at
    each checkpoint (hit exactly by clipping steps, not interpolated).
    """
    _require_match(state, tensor, proj)
    if not math.isfinite(t):
        raise ValueError("time span must be finite")
    config = config or IntegratorConfig()
    kernel = FlowKernel(tensor, proj)

    log_t, log_m, log_e, log_h = [], [], [], []

    def observe(offset, local_t, c, skip_start):
        if skip_start and local_t == 0.0:
            return  # segment start repeats the previous segment's end
        m, e, h = kernel.conserved(c)
        log_t.append(state.time + offset + local_t)
        log_m.append(m)
        log_e.append(e)
        log_h.append(h)

    # (stop offset, is a requested checkpoint) pairs, ending at t
    if checkpoints is None:
        stops = [(t, False)]
    else:
        cps = [float(s) for s in checkpoints]
        if any(not math.isfinite(s) for s in cps):
            raise ValueError("checkpoints must be finite")
        sign = 1.0 if t >= 0 else -1.0
        if sorted(cps, key=lambda s: sign * s) != cps:
            raise ValueError("checkpoints must be sorted along the direction of t")
        if cps and (min(cps) < min(0.0, t) or max(cps) > max(0.0, t)):
            raise ValueError("checkpoints must lie between 0 and t")
        stops = [(s, True) for s in cps]
        if not cps or cps[-1] != t:
            stops.append((t, False))

    snapshots = []
    c = state.coeffs
    reached = 0.0
    first = True
    for stop, is_checkpoint in stops:
        span = stop - reached
        skip = not first

        def obs(lt, cc, base=reached, skip=skip):
            observe(base, lt, cc, skip)

        c = kernel.evolve(c, span, config, observer=obs)
        first = False
        reached = stop
        if is_checkpoint:
            snapshots.append(CoefficientState(state.family, c.copy(), state.time + reached))

    final = CoefficientState(state.family, c, state.time + t)
    log = ConservationLog(
        np.asarray(log_t), np.asarray(log_m), np.asarray(log_e), np.asarray(log_h)
    )
    return EvolveResult(final, log, snapshots)


def mass(state):
    """sum |c_n|^2."""
    c = state.coeffs
    return float(np.sum(c.real ** 2 + c.imag ** 2))


def energy(state):
    """sum lambda_n |c_n|^2."""
    c = state.coeffs
    lam = state.family.eigenvalue(np.arange(len(c)))
    return float(np.sum(lam * (c.real ** 2 + c.imag ** 2)))


def hamiltonian(state, tensor):
    """Quartic form sum w c_{n1} c_{n2} conj(c_{n3}) conj(c_{n4}) over all
    ordered quadruples; real by pair-exchange symmetry (asserted)."""
    _require_match(state, tensor)
    plan = kernels.build_plan(tensor)
    value = kernels.pairing_apply(plan, state.coeffs)
    if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
        raise RuntimeError(f"quartic form imaginary residual {value.imag:.3e}")
    return value.real


def sobolev_norm(state, s):
    """sqrt(sum lambda_n^s |c_n|^2)."""
    c = state.coeffs
    lam = np.asarray(state.family.eigenvalue(np.arange(len(c))), dtype=np.float64)
    return float(np.sqrt(np.sum(lam ** float(s) * (c.real ** 2 + c.imag ** 2))))


def propagate_linear(state, tau):
    """Exact linear propagator: c_n <- e^{-i tau lambda_n} c_n.

    A unitary diagonal transform (used inside the space-time norms), not an
    evolution of the nonlinear flow; the state's time label is unchanged.
    """
    lam = np.asarray(state.family.eigenvalue(np.arange(len(state.coeffs))), dtype=np.float64)
    return CoefficientState(state.family, state.coeffs * np.exp(-1j * float(tau) * lam), state.time)


def eval_field(state, grid=None, check=True):
    """Sample u(x) = sum c_n phi_n(x) on a 2D grid.

    Returns a complex array F with F[i, j] = u(x1_i, x2_j).  With check=True
    the grid's trapezoid mass must reproduce the exact mass to 0.1%,
    otherwise GridResolutionError; that guards both resolution and extent.
    """
    if grid is None:
        grid = default_grid(float(np.max(state.family.eigenvalue(state.cutoff))))
    ax = grid.axis()
    x1 = ax[:, None]
    x2 = ax[None, :]
    out = np.zeros((len(ax), len(ax)), dtype=np.complex128)
    for n, cn in enumerate(state.coeffs):
        if cn != 0.0:
            out += cn * eval_basis(state.family, n, x1, x2)
    if check:
        exact = mass(state)
        if exact > 0:
            grid_mass = float(np.sum(out.real ** 2 + out.imag ** 2)) * grid.spacing ** 2
            err = abs(grid_mass - exact) / exact
            if err > 1e-3:
                raise GridResolutionError(
                    f"grid mass off by {err:.2e}; increase npoints or halfwidth"
                )
    return out


def _spacetime_l4_hol(coeffs):
    n = np.arange(len(coeffs), dtype=np.float64)
    if len(coeffs) > 150:
        raise ValueError("holomorphic space-time norm implemented for cutoffs <= 149")
    a = coeffs * np.exp(-0.5 * (math.log(math.pi) + gammaln(n + 1.0)))
    b = np.convolve(a, a)
    m = np.arange(len(b), dtype=np.float64)
    bt = b * np.exp(0.5 * (gammaln(m + 1.0) - m * math.log(2.0)))
    total = (math.pi ** 2 / 4.0) * float(np.sum(bt.real ** 2 + bt.imag ** 2))
    return total ** 0.25


def _spacetime_l4_radial(coeffs):
    N = len(coeffs) - 1
    # |sum a_n psi_n(u)|^4 e^{-2u} against the fold: degree 4N needs 2N+1 nodes
    rule = build_laguerre_rule(2 * N + 5, scale=2.0)
    psi = laguerre_weighted(N, rule.nodes)
    M = 4 * N + 1
    tau = -math.pi / 4.0 + (np.arange(M) + 0.5) * (math.pi / 2.0) / M
    # lambda_n = 4n + 2; the common e^{-2 i tau} phase drops inside |.|
    phases = np.exp(-4j * np.outer(tau, np.arange(N + 1)))
    F = (phases * coeffs) @ psi
    per_tau = (F.real ** 2 + F.imag ** 2) ** 2 @ rule.weights
    return (0.5 * float(per_tau.mean())) ** 0.25


def _spacetime_l4_eigenspace(family, coeffs):
    N = family.level
    rule = build_quadrature(2 * N + 5, scale=2.0)
    table = rule.weights[None, :] ** 0.25 * hermite_polyparts(N, rule.nodes)
    F = (coeffs[:, None] * table).T @ table[::-1]
    total = float(np.sum((F.real ** 2 + F.imag ** 2) ** 2))
    return ((math.pi / 2.0) * total) ** 0.25


def spacetime_l4(state):
    """L^4 norm of the linear flow over one period window:
    (int_{-pi/4}^{pi/4} int |e^{-i tau H} u|^4 dx dtau)^{1/4}.

    Evaluated exactly per family: the holomorphic chain reduces to a
    diagonal sum over the squared coefficient convolution (all interactions
    share one phase), the radial chain to a uniform tau average that a
    finite exponential sum makes exact, and an eigenspace carries a single
    global phase so only the spatial quartic integral remains.
    """
    kind = state.family.kind
    if kind == "holomorphic":
        return _spacetime_l4_hol(state.coeffs)
    if kind == "radial":
        return _spacetime_l4_radial(state.coeffs)
    return _spacetime_l4_eigenspace(state.family, state.coeffs)


def state_to_dict(state):
    """JSON-ready dict: {family, time, coeffs: [[re, im], ...]}."""
    return {
        "family": state.family.label,
        "time": state.time,
        "coeffs": [[float(c.real), float(c.imag)] for c in state.coeffs],
    }


def state_from_dict(data):
    coeffs = np.array([complex(re, im) for re, im in data["coeffs"]], dtype=np.complex128)
    return CoefficientState(family_from_label(data["family"]), coeffs, float(data.get("time", 0.0)))

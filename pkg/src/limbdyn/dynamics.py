"""Lagrangian dynamics of the robot+leg system.

Covers energies, passive stiffness/damping, generalized forces, inverse
dynamics for torque sizing and the constraint-reduced forward dynamics
used by the control simulation.  The hot evaluation path (mass matrix and
bias) runs through the backend kernels; a slower complex-step Lagrangian
evaluation covers the paper-literal velocity mode and doubles as an
independent cross-check of the kernel.

SystemModel is immutable after construction and every operation is pure,
so distinct simulations can run concurrently without shared state.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .backend import USING_NUMBA
from .kinematics import (
    ChainGeometry,
    GeneralizedState,
    angular_velocities,
    chain_rotations,
    com_positions,
    com_velocities,
)

GRAVITY = 9.81

KNEE_SPRING = 3.58     # Nm/rad, linear
KNEE_DAMPING = 0.1     # Nm s/rad

# quartic passive stiffness fits, Nm/rad, coefficients (c4, c3, c2, c1, c0)
ALPHA_STIFFNESS_COEFFS = (313.9, 203.2, 59.3, 13.8, 6.6)
PHI_STIFFNESS_COEFFS = (3163.5, -554.7, -112.5, 7.3, 7.6)
PSI_STIFFNESS_COEFFS = (5010.1, -1739.5, 402.1, -17.1, 11.2)

STIFFNESS_FIT_RANGE = 0.7       # rad, validity guard for evaluation
STIFFNESS_POSITIVE_RANGE = 0.6  # rad, positivity checked at construction

LINK_NAMES = ("us-s", "ls", "ff", "fp-f")

# measured mechanical properties: mass (kg), world COM at the zero
# configuration with the knee as origin (m), inertia about the COM in body
# axes (kg m^2)
TABLE_MASSES = (5.072, 2.034, 0.958, 1.666)
TABLE_COMS = (
    (0.021, 0.008, -0.147),
    (-0.038, -0.011, -0.297),
    (-0.001, 0.045, -0.400),
    (0.0, 0.067, -0.452),
)
TABLE_INERTIAS = (  # (Ixx, Iyy, Izz, Ixy, Ixz, Iyz) in kg cm^2
    (780.0, 1050.0, 510.0, 0.0, -160.0, 30.0),
    (170.0, 280.0, 220.0, -20.0, -80.0, -20.0),
    (120.0, 40.0, 190.0, 0.0, 0.0, 0.0),
    (170.0, 20.0, 160.0, 0.0, 0.0, 0.0),
)

ELASTIC_MODES = ("secant", "tangent")
VELOCITY_MODES = ("exact", "paper_literal")


class StiffnessRangeError(ValueError):
    """Stiffness polynomial evaluated outside its fit validity range."""

    def __init__(self, joint: str, value: float):
        self.joint = joint
        super().__init__(
            f"stiffness of joint {joint!r} queried at {value:.4f} rad, "
            f"outside the fitted range |q| <= {STIFFNESS_FIT_RANGE} rad"
        )


def inertia_tensor(ixx, iyy, izz, ixy, ixz, iyz, unit_kg_cm2=True):
    """Assemble a symmetric inertia tensor, converting kg cm^2 to kg m^2."""
    scale = 1e-4 if unit_kg_cm2 else 1.0
    return scale * np.array(
        [[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]], dtype=float
    )


@dataclass(frozen=True)
class RigidLink:
    """Mass, zero-configuration world COM and body-frame inertia of a link."""

    name: str
    mass: float
    com0: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "com0", np.asarray(self.com0, dtype=float))
        object.__setattr__(self, "inertia",
                           np.asarray(self.inertia, dtype=float))
        if not self.mass > 0:
            raise ValueError(f"link {self.name!r}: mass must be positive")
        if self.inertia.shape != (3, 3):
            raise ValueError(f"link {self.name!r}: inertia must be 3x3")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise ValueError(f"link {self.name!r}: inertia must be symmetric")
        d = np.diag(self.inertia)
        if np.any(d <= 0):
            raise ValueError(
                f"link {self.name!r}: inertia diagonal must be positive"
            )
        if np.any(np.linalg.eigvalsh(self.inertia) <= 0):
            raise ValueError(
                f"link {self.name!r}: inertia must be positive definite"
            )
        # the measured 'ff' row violates Ixx + Iyy >= Izz, so the physical
        # triangle inequality is reported rather than enforced
        sums = (d[0] + d[1] - d[2], d[0] + d[2] - d[1], d[1] + d[2] - d[0])
        if min(sums) < -1e-12:
            warnings.warn(
                f"link {self.name!r}: inertia diagonal {tuple(d)} violates "
                "the rigid-body triangle inequality",
                stacklevel=2,
            )


@dataclass(frozen=True)
class StiffnessPolynomial:
    """Quartic passive joint stiffness K(q) in Nm/rad."""

    c4: float
    c3: float
    c2: float
    c1: float
    c0: float
    joint: str = ""

    def __post_init__(self):
        grid = np.linspace(-STIFFNESS_POSITIVE_RANGE,
                           STIFFNESS_POSITIVE_RANGE, 481)
        if np.any(self.eval_unchecked(grid) <= 0):
            raise ValueError(
                f"stiffness polynomial {self.joint!r} is not positive on "
                f"[-{STIFFNESS_POSITIVE_RANGE}, {STIFFNESS_POSITIVE_RANGE}] rad"
            )

    def coeffs(self) -> np.ndarray:
        return np.array([self.c4, self.c3, self.c2, self.c1, self.c0])

    def eval_unchecked(self, q):
        c4, c3, c2, c1, c0 = self.c4, self.c3, self.c2, self.c1, self.c0
        return (((c4 * q + c3) * q + c2) * q + c1) * q + c0

    def __call__(self, q: float) -> float:
        return stiffness_eval(self, q)

    def restoring_torque(self, q, mode: str = "secant"):
        """Passive elastic torque magnitude at deflection q (sign of q)."""
        if mode == "secant":
            return self.eval_unchecked(q) * q
        if mode == "tangent":
            c4, c3, c2, c1, c0 = (self.c4, self.c3, self.c2, self.c1, self.c0)
            return ((((c4 / 5 * q + c3 / 4) * q + c2 / 3) * q + c1 / 2) * q
                    + c0) * q
        raise ValueError(f"unknown elastic mode {mode!r}")

    def energy(self, q, mode: str = "secant"):
        """Stored elastic energy, the exact integral of the torque law."""
        c4, c3, c2, c1, c0 = self.c4, self.c3, self.c2, self.c1, self.c0
        if mode == "secant":
            return (c4 * q**6 / 6 + c3 * q**5 / 5 + c2 * q**4 / 4
                    + c1 * q**3 / 3 + c0 * q**2 / 2)
        if mode == "tangent":
            return (c4 * q**6 / 30 + c3 * q**5 / 20 + c2 * q**4 / 12
                    + c1 * q**3 / 6 + c0 * q**2 / 2)
        raise ValueError(f"unknown elastic mode {mode!r}")


def stiffness_eval(poly: StiffnessPolynomial, q: float) -> float:
    """K(q) with the fit-range guard."""
    if abs(q) > STIFFNESS_FIT_RANGE:
        raise StiffnessRangeError(poly.joint or "<unnamed>", q)
    return float(poly.eval_unchecked(q))


@dataclass(frozen=True)
class PassiveJointSet:
    """Passive knee spring/damper and the three ankle stiffness quartics."""

    knee_stiffness: float = KNEE_SPRING
    knee_damping: float = KNEE_DAMPING
    k_alpha: StiffnessPolynomial = field(
        default_factory=lambda: StiffnessPolynomial(
            *ALPHA_STIFFNESS_COEFFS, joint="alpha"))
    k_phi: StiffnessPolynomial = field(
        default_factory=lambda: StiffnessPolynomial(
            *PHI_STIFFNESS_COEFFS, joint="phi"))
    k_psi: StiffnessPolynomial = field(
        default_factory=lambda: StiffnessPolynomial(
            *PSI_STIFFNESS_COEFFS, joint="psi"))

    def __post_init__(self):
        if self.knee_stiffness <= 0 or self.knee_damping <= 0:
            raise ValueError("knee spring and damper constants must be positive")


@dataclass(frozen=True)
class TorqueSet:
    """Applied torques; T_psi is the hypothetical foot-generated torque."""

    T_theta: float = 0.0
    T_phi: float = 0.0
    T_alpha: float = 0.0
    T_psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.T_theta, self.T_phi, self.T_alpha, self.T_psi])


@dataclass(frozen=True)
class SystemModel:
    """The four links plus passive joints, gravity and evaluation modes."""

    links: tuple
    geometry: ChainGeometry
    passive: PassiveJointSet = field(default_factory=PassiveJointSet)
    gravity: float = GRAVITY
    velocity_mode: str = "exact"
    elastic_mode: str = "secant"

    def __post_init__(self):
        if len(self.links) != 4:
            raise ValueError("SystemModel needs exactly four links")
        if self.velocity_mode not in VELOCITY_MODES:
            raise ValueError(f"unknown velocity mode {self.velocity_mode!r}")
        if self.elastic_mode not in ELASTIC_MODES:
            raise ValueError(f"unknown elastic mode {self.elastic_mode!r}")

    @property
    def masses(self) -> np.ndarray:
        return np.array([lk.mass for lk in self.links])

    def packed(self):
        """Kernel argument pack (masses, inertias, locs, scalars, kq, mode)."""
        geom = self.geometry
        offs = geom.com_body_offsets
        locs = np.vstack([offs[0], offs[1], geom.ankle_offset, offs[2],
                          offs[3]])
        inertias = np.stack([lk.inertia for lk in self.links])
        scalars = np.array([self.gravity, self.passive.knee_stiffness,
                            self.passive.knee_damping])
        kq = np.vstack([self.passive.k_alpha.coeffs(),
                        self.passive.k_phi.coeffs(),
                        self.passive.k_psi.coeffs()])
        mode = 0 if self.elastic_mode == "secant" else 1
        return self.masses, inertias, locs, scalars, kq, mode


def default_links():
    links = []
    for name, mass, com, iner in zip(LINK_NAMES, TABLE_MASSES, TABLE_COMS,
                                     TABLE_INERTIAS):
        links.append(RigidLink(name, mass, np.array(com),
                               inertia_tensor(*iner)))
    return tuple(links)


def geometry_from_links(links, shank_length: float) -> ChainGeometry:
    """Body COM offsets from the zero-configuration world COM columns."""
    ankle = np.array([0.0, 0.0, -shank_length])
    return ChainGeometry(
        shank_length=shank_length,
        com_body_offsets=(
            links[0].com0.copy(),
            links[1].com0.copy(),
            links[2].com0 - ankle,
            links[3].com0 - ankle,
        ),
    )


def default_model(shank_length: float = None, velocity_mode: str = "exact",
                  elastic_mode: str = "secant",
                  gravity: float = GRAVITY) -> SystemModel:
    """Reference model: the measured links and an average 1.7 m subject."""
    links = default_links()
    if shank_length is None:
        shank_length = ChainGeometry().shank_length
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the 'ff' triangle-inequality note
        geom = geometry_from_links(links, shank_length)
    return SystemModel(links=links, geometry=geom,
                       passive=PassiveJointSet(), gravity=gravity,
                       velocity_mode=velocity_mode, elastic_mode=elastic_mode)


# ---------------------------------------------------------------------------
# energies

def kinetic_energy(model: SystemModel, q: GeneralizedState) -> float:
    """Sum of translational and rotational kinetic energies of all links."""
    ws = angular_velocities(q)
    vs = com_velocities(q, model.geometry, model.velocity_mode)
    rots = chain_rotations(q)
    ke = 0.0
    for lk, w, v, r in zip(model.links, ws, vs, rots):
        iw = r @ lk.inertia @ r.T
        ke += 0.5 * lk.mass * float(v @ v) + 0.5 * float(w @ (iw @ w))
    return ke


def elastic_energy(model: SystemModel, q: GeneralizedState) -> float:
    p = model.passive
    mode = model.elastic_mode
    e = 0.5 * p.knee_stiffness * q.theta**2
    for poly, val in ((p.k_phi, q.phi), (p.k_alpha, q.alpha),
                      (p.k_psi, q.psi)):
        stiffness_eval(poly, val)  # range guard
        e += poly.energy(val, mode)
    return e


def potential_energy(model: SystemModel, q: GeneralizedState) -> float:
    """Gravitational plus stored elastic energy."""
    coms = com_positions(q, model.geometry)
    pe = sum(lk.mass * model.gravity * c[2]
             for lk, c in zip(model.links, coms))
    return float(pe) + elastic_energy(model, q)


# ---------------------------------------------------------------------------
# generalized forces (applied torques projected on the coordinates)

def generalized_forces(q: GeneralizedState, applied: TorqueSet,
                       knee_damping: float = KNEE_DAMPING) -> np.ndarray:
    """Project the eight applied torque vectors through the partial angular
    velocities of their carrier links.

    Action-reaction pairs cancel everywhere except on their own coordinate,
    and the knee damper enters only Q_theta.
    """
    r_a, r_b, r_c, r_d = chain_rotations(q)
    ia, kb, ic, jd = r_a[:, 0], r_b[:, 2], r_c[:, 0], r_d[:, 1]
    zero = np.zeros(3)

    # partial angular velocities d(omega)/d(qdot_k) per carrier body
    partials_a = (ia, zero, zero, zero)
    partials_b = (ia, kb, zero, zero)
    partials_c = (ia, kb, ic, zero)
    partials_d = (ia, kb, ic, jd)

    t_damp = -knee_damping * q.theta_dot
    contributions = (
        (applied.T_theta * ia, partials_a),
        (t_damp * ia, partials_a),
        (applied.T_phi * kb, partials_b),
        (-applied.T_phi * kb, partials_a),
        (applied.T_alpha * ic, partials_c),
        (-applied.T_alpha * ic, partials_b),
        (applied.T_psi * jd, partials_d),
        (-applied.T_psi * jd, partials_c),
    )
    out = np.zeros(4)
    for vec, partials in contributions:
        for k in range(4):
            out[k] += float(vec @ partials[k])
    return out


# ---------------------------------------------------------------------------
# mass matrix / bias and the dynamics solvers

def _position_jacobians(q4, geom: ChainGeometry):
    """Exact COM position Jacobians (complex-safe), one (3, 4) per body."""
    state = GeneralizedState(*(q4[k] for k in range(4)))
    dtype = np.asarray(q4).dtype
    r_a, r_b, r_c, r_d = _chain_rotations_any(q4)
    ia, kb, ic, jd = r_a[:, 0], r_b[:, 2], r_c[:, 0], r_d[:, 1]
    offs = geom.com_body_offsets
    c1 = r_a @ offs[0]
    c2 = r_b @ offs[1]
    bp = r_a @ np.asarray(geom.ankle_offset, dtype=dtype)
    r3 = r_c @ offs[2]
    r4 = r_d @ offs[3]
    c3 = bp + r3
    c4 = bp + r4
    del state

    jvs = []
    for body in range(4):
        jv = np.zeros((3, 4), dtype=dtype)
        if body == 0:
            jv[:, 0] = np.cross(ia, c1)
        elif body == 1:
            jv[:, 0] = np.cross(ia, c2)
            jv[:, 1] = np.cross(kb, c2)
        elif body == 2:
            jv[:, 0] = np.cross(ia, c3)
            jv[:, 1] = np.cross(kb, c3)
            jv[:, 2] = np.cross(ic, r3)
        else:
            jv[:, 0] = np.cross(ia, c4)
            jv[:, 1] = np.cross(kb, c4)
            jv[:, 2] = np.cross(ic, r4)
            jv[:, 3] = np.cross(jd, r4)
        jvs.append(jv)
    return jvs


def _chain_rotations_any(q4):
    """Chain rotations for real or complex coordinates (complex-step safe)."""
    th, ph, al, ps = q4[0], q4[1], q4[2], q4[3]
    one = th * 0 + 1.0
    zero = th * 0

    def rx(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[one, zero, zero], [zero, c, -s], [zero, s, c]])

    def ry(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, zero, s], [zero, one, zero], [-s, zero, c]])

    def rz(a):
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s, zero], [s, c, zero], [zero, zero, one]])

    r_a = rx(th)
    r_b = r_a @ rz(ph)
    r_c = r_b @ rx(al)
    r_d = r_c @ ry(ps)
    return r_a, r_b, r_c, r_d


def _mass_matrix_any(q4, model: SystemModel):
    """M(q) for either velocity mode; accepts complex q for derivative work."""
    dtype = np.asarray(q4).dtype
    geom = model.geometry
    r_a, r_b, r_c, r_d = _chain_rotations_any(q4)
    ia, kb, ic, jd = r_a[:, 0], r_b[:, 2], r_c[:, 0], r_d[:, 1]
    offs = geom.com_body_offsets
    c1 = r_a @ offs[0]
    c2 = r_b @ offs[1]
    bp = r_a @ np.asarray(geom.ankle_offset, dtype=dtype)
    r3 = r_c @ offs[2]
    r4 = r_d @ offs[3]
    c3 = bp + r3
    c4 = bp + r4

    literal = model.velocity_mode == "paper_literal"
    arm3 = c3 if literal else r3
    arm4 = c4 if literal else r4

    jw = [np.zeros((3, 4), dtype=dtype) for _ in range(4)]
    jv = [np.zeros((3, 4), dtype=dtype) for _ in range(4)]

    jw[0][:, 0] = ia
    jv[0][:, 0] = np.cross(ia, c1)

    jw[1][:, 0] = ia
    jw[1][:, 1] = kb
    jv[1][:, 0] = np.cross(ia, c2)
    jv[1][:, 1] = np.cross(kb, c2)

    jw[2][:, 0] = ia
    jw[2][:, 1] = kb
    jw[2][:, 2] = ic
    jv[2][:, 0] = np.cross(ia, c3)
    jv[2][:, 1] = np.cross(kb, c3)
    jv[2][:, 2] = np.cross(ic, arm3)

    jw[3][:, 0] = ia
    jw[3][:, 1] = kb
    jw[3][:, 2] = ic
    jw[3][:, 3] = jd
    jv[3][:, 0] = np.cross(ia, c4)
    jv[3][:, 1] = np.cross(kb, c4)
    jv[3][:, 2] = np.cross(ic, arm4)
    jv[3][:, 3] = np.cross(jd, arm4)

    rots = (r_a, r_b, r_c, r_d)
    mm = np.zeros((4, 4), dtype=dtype)
    for lk, w, v, r in zip(model.links, jw, jv, rots):
        iw = r @ lk.inertia.astype(dtype) @ r.T
        mm = mm + lk.mass * (v.T @ v) + w.T @ (iw @ w)
    return mm


def _elastic_gradient(model: SystemModel, q4):
    p = model.passive
    mode = model.elastic_mode
    g = np.zeros(4)
    g[0] = p.knee_stiffness * q4[0]
    g[1] = p.k_phi.restoring_torque(q4[1], mode)
    g[2] = p.k_alpha.restoring_torque(q4[2], mode)
    g[3] = p.k_psi.restoring_torque(q4[3], mode)
    return g


def _potential_gradient(model: SystemModel, q4):
    jvs = _position_jacobians(np.asarray(q4, dtype=float), model.geometry)
    grad = np.zeros(4)
    for lk, jv in zip(model.links, jvs):
        grad += lk.mass * model.gravity * jv[2, :]
    return grad + _elastic_gradient(model, q4)


def _bias_lagrangian(model: SystemModel, q4, qd4):
    """Bias vector from the Lagrangian directly, using complex-step dM/dq.

    This is the evaluation path for the paper-literal velocity mode and an
    independent oracle for the Newton-Euler kernel in exact mode.
    """
    q4 = np.asarray(q4, dtype=float)
    qd4 = np.asarray(qd4, dtype=float)
    h = 1e-20
    dm = np.empty((4, 4, 4))
    for k in range(4):
        qc = q4.astype(complex)
        qc[k] += 1j * h
        dm[k] = np.imag(_mass_matrix_any(qc, model)) / h

    mdot = np.zeros((4, 4))
    for k in range(4):
        mdot += dm[k] * qd4[k]
    b = mdot @ qd4
    for k in range(4):
        b[k] -= 0.5 * float(qd4 @ (dm[k] @ qd4))
    return b + _potential_gradient(model, q4)


def mass_matrix_and_bias(model: SystemModel, q: GeneralizedState):
    """M(q) and b(q, qd) with M qdd + b = Q.

    Exact velocity mode runs through the backend kernel; the paper-literal
    mode uses the complex-step Lagrangian path.
    """
    q4 = q.positions()
    qd4 = q.rates()
    if model.velocity_mode == "exact":
        mm, bias = _kernels.dyn_core_active()(q4, qd4, *model.packed())
        return mm, bias
    mm = np.real(_mass_matrix_any(q4, model))
    return mm, _bias_lagrangian(model, q4, qd4)


def inverse_dynamics(model: SystemModel, q, q_dot, q_ddot) -> TorqueSet:
    """The unique applied torques sustaining the given trajectory sample."""
    state = GeneralizedState.from_arrays(np.asarray(q, dtype=float),
                                         np.asarray(q_dot, dtype=float))
    mm, bias = mass_matrix_and_bias(model, state)
    tau = mm @ np.asarray(q_ddot, dtype=float) + bias
    tau[0] += model.passive.knee_damping * state.theta_dot
    return TorqueSet(*tau)


def inverse_dynamics_sweep(model: SystemModel, qs, qds, qdds) -> np.ndarray:
    """Applied torques for every sample of a trajectory, (N, 4)."""
    if model.velocity_mode == "exact":
        sweep = _kernels.inverse_sweep_active()
        core = _kernels.dyn_core_active()
        return sweep(core, np.ascontiguousarray(qs, dtype=float),
                     np.ascontiguousarray(qds, dtype=float),
                     np.ascontiguousarray(qdds, dtype=float),
                     *model.packed())
    out = np.empty((len(qs), 4))
    for i in range(len(qs)):
        out[i] = inverse_dynamics(model, qs[i], qds[i], qdds[i]).as_array()
    return out


CONSTRAINT_TOLERANCE = 1e-9


def forward_dynamics_constrained(model: SystemModel, q, q_dot,
                                 motor_torques, coupling_slope: float):
    """Accelerations and foot torque under psi = coupling_slope * phi.

    ``motor_torques`` is (T_theta, T_phi, T_alpha).  Returns
    (theta_ddot, phi_ddot, alpha_ddot, T_psi); the implied psi acceleration
    is coupling_slope * phi_ddot exactly.
    """
    q = np.asarray(q, dtype=float)
    qd = np.asarray(q_dot, dtype=float)
    if abs(q[3] - coupling_slope * q[1]) > CONSTRAINT_TOLERANCE:
        raise ValueError(
            "state violates the psi = c*phi coupling: "
            f"|psi - c*phi| = {abs(q[3] - coupling_slope * q[1]):.3e}"
        )
    if abs(qd[3] - coupling_slope * qd[1]) > CONSTRAINT_TOLERANCE:
        raise ValueError(
            "rates violate the psi = c*phi coupling: "
            f"|psi_dot - c*phi_dot| = "
            f"{abs(qd[3] - coupling_slope * qd[1]):.3e}"
        )
    y = np.array([q[0], q[1], q[2], qd[0], qd[1], qd[2]])
    u = np.asarray(motor_torques, dtype=float)
    if model.velocity_mode == "exact":
        rhs = _kernels.constrained_rhs_active()
        core = _kernels.dyn_core_active()
        acc, t_psi = rhs(core, y, u, coupling_slope, *model.packed())
        return acc[0], acc[1], acc[2], float(t_psi)

    state = GeneralizedState.from_arrays(q, qd)
    mm, bias = mass_matrix_and_bias(model, state)
    a = np.empty((3, 3))
    for r in range(3):
        a[r, 0] = mm[r, 0]
        a[r, 1] = mm[r, 1] + coupling_slope * mm[r, 3]
        a[r, 2] = mm[r, 2]
    rhs_vec = np.array([
        u[0] - model.passive.knee_damping * qd[0] - bias[0],
        u[1] - bias[1],
        u[2] - bias[2],
    ])
    acc = np.linalg.solve(a, rhs_vec)
    t_psi = (mm[3, 0] * acc[0]
             + (mm[3, 1] + coupling_slope * mm[3, 3]) * acc[1]
             + mm[3, 2] * acc[2] + bias[3])
    return acc[0], acc[1], acc[2], float(t_psi)


def energy_balance_residuals(model: SystemModel, ts, qs, qds, torques):
    """Power-balance check along a trajectory.

    Returns (instantaneous residuals, integrated drift, peak power,
    peak energy span).  The energy rate is taken from central differences
    of KE+PE so the check stays independent of the dynamics path.
    """
    n = len(ts)
    energy = np.empty(n)
    for i in range(n):
        st = GeneralizedState.from_arrays(qs[i], qds[i])
        energy[i] = kinetic_energy(model, st) + potential_energy(model, st)
    power = np.einsum("ij,ij->i", torques, qds) \
        - model.passive.knee_damping * qds[:, 0] ** 2
    dt = ts[1] - ts[0]
    de = np.gradient(energy, dt)
    residual = de - power
    work = np.concatenate(
        [[0.0], np.cumsum(0.5 * (power[1:] + power[:-1]) * dt)]
    )
    drift = np.max(np.abs((energy - energy[0]) - work))
    span = np.max(energy) - np.min(energy)
    return residual, drift, float(np.max(np.abs(power))), float(span)

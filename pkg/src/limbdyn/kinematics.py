"""Frames, rotations and serial-chain kinematics of the four-body system.

The chain hangs from the knee point O (world origin): the shank assembly
rotates about the fixed X axis (knee flexion/extension, theta), the lower
shank about the shank's own long axis (abduction/adduction, phi), the foot
frame about the ankle transverse axis (plantar/dorsiflexion, alpha) and the
foot plate about the foot long axis (supination/pronation, psi).  Both foot
axes pass through the ankle point on the shank axis.

Vectors are plain float64 ``(3,)`` arrays, rotations ``(3, 3)`` arrays.
All angles are radians; degree values are converted at I/O boundaries.
All functions are pure and all types immutable, so everything here is
thread-safe.
"""

from dataclasses import dataclass, field

import numpy as np

# robot range of motion, radians (theta spans knee flexion 140deg below the
# seated zero up to the straight leg at +90deg)
ROM_LIMITS = {
    "theta": (np.deg2rad(-50.0), np.deg2rad(90.0)),
    "phi": (np.deg2rad(-60.0), np.deg2rad(60.0)),
    "alpha": (np.deg2rad(-60.0), np.deg2rad(70.0)),
    "psi": (np.deg2rad(-50.0), np.deg2rad(50.0)),
}

# shank length for the 1.7 m reference subject: 0.246 x stature
DEFAULT_SHANK_LENGTH = 0.246 * 1.7


@dataclass(frozen=True)
class GeneralizedState:
    """The four joint coordinates and their rates."""

    theta: float = 0.0
    phi: float = 0.0
    alpha: float = 0.0
    psi: float = 0.0
    theta_dot: float = 0.0
    phi_dot: float = 0.0
    alpha_dot: float = 0.0
    psi_dot: float = 0.0

    def positions(self) -> np.ndarray:
        return np.array([self.theta, self.phi, self.alpha, self.psi])

    def rates(self) -> np.ndarray:
        return np.array(
            [self.theta_dot, self.phi_dot, self.alpha_dot, self.psi_dot]
        )

    @classmethod
    def from_arrays(cls, q, qd=None) -> "GeneralizedState":
        qd = np.zeros(4) if qd is None else np.asarray(qd, dtype=float)
        q = np.asarray(q, dtype=float)
        return cls(q[0], q[1], q[2], q[3], qd[0], qd[1], qd[2], qd[3])

    def validate_finite(self):
        vals = np.concatenate([self.positions(), self.rates()])
        if not np.all(np.isfinite(vals)):
            raise ValueError("generalized state contains non-finite values")

    def validate_rom(self):
        """Check the four angles against the robot's range of motion."""
        self.validate_finite()
        for name, (lo, hi) in ROM_LIMITS.items():
            val = getattr(self, name)
            if not lo <= val <= hi:
                raise ValueError(
                    f"{name}={val:.4f} rad outside robot ROM "
                    f"[{lo:.4f}, {hi:.4f}]"
                )


def _default_offsets():
    return (
        np.array([0.021, 0.008, -0.147]),
        np.array([-0.038, -0.011, -0.297]),
        np.array([-0.001, 0.045, -0.40 + DEFAULT_SHANK_LENGTH]),
        np.array([0.0, 0.067, -0.452 + DEFAULT_SHANK_LENGTH]),
    )


@dataclass(frozen=True)
class ChainGeometry:
    """Shank length and body-fixed COM offsets of the four links.

    Offsets for 'us-s' and 'ls' are taken from the knee point O, offsets
    for 'ff' and 'fp-f' from the ankle point.  At the zero configuration
    the reconstructed world COMs reproduce the measured columns.
    """

    shank_length: float = DEFAULT_SHANK_LENGTH
    com_body_offsets: tuple = field(default_factory=_default_offsets)

    def __post_init__(self):
        if not self.shank_length > 0:
            raise ValueError("shank_length must be positive")
        if len(self.com_body_offsets) != 4:
            raise ValueError("need four body COM offsets")

    @property
    def ankle_offset(self) -> np.ndarray:
        return np.array([0.0, 0.0, -self.shank_length])

    def com_world_zero(self) -> np.ndarray:
        """World COM positions at the zero configuration, one row per body."""
        offs = self.com_body_offsets
        ankle = self.ankle_offset
        return np.vstack(
            [offs[0], offs[1], ankle + offs[2], ankle + offs[3]]
        )


def rot_axis(axis: str, angle: float) -> np.ndarray:
    """Right-handed elementary rotation about X, Y or Z."""
    if not np.isfinite(angle):
        raise ValueError("rotation angle must be finite")
    c, s = np.cos(angle), np.sin(angle)
    if axis in ("X", "x"):
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis in ("Y", "y"):
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    if axis in ("Z", "z"):
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    raise ValueError(f"unknown rotation axis {axis!r}")


def chain_rotations(q: GeneralizedState):
    """World orientations (R_A, R_B, R_C, R_D) of the four links.

    The composition Rx(theta) . Rz(phi) . Rx(alpha) . Ry(psi) is the one
    whose body angular velocities decompose additively along the joint
    axes.
    """
    r_a = rot_axis("X", q.theta)
    r_b = r_a @ rot_axis("Z", q.phi)
    r_c = r_b @ rot_axis("X", q.alpha)
    r_d = r_c @ rot_axis("Y", q.psi)
    return r_a, r_b, r_c, r_d


def joint_axes(q: GeneralizedState):
    """World-frame unit vectors of the four joint axes (i_a, k_b, i_c, j_d)."""
    r_a, r_b, r_c, r_d = chain_rotations(q)
    return r_a[:, 0], r_b[:, 2], r_c[:, 0], r_d[:, 1]


def angular_velocities(q: GeneralizedState):
    """World-frame angular velocities of the four links."""
    ia, kb, ic, jd = joint_axes(q)
    w_a = q.theta_dot * ia
    w_b = w_a + q.phi_dot * kb
    w_c = w_b + q.alpha_dot * ic
    w_d = w_c + q.psi_dot * jd
    return w_a, w_b, w_c, w_d


def ankle_point(q: GeneralizedState, geom: ChainGeometry) -> np.ndarray:
    """World position of the ankle point on the shank axis."""
    r_a = rot_axis("X", q.theta)
    return r_a @ geom.ankle_offset


def com_positions(q: GeneralizedState, geom: ChainGeometry):
    """World COM positions of the four links, knee point O as origin."""
    r_a, r_b, r_c, r_d = chain_rotations(q)
    offs = geom.com_body_offsets
    c_uss = r_a @ offs[0]
    c_ls = r_b @ offs[1]
    bp = r_a @ geom.ankle_offset
    c_ff = bp + r_c @ offs[2]
    c_fpf = bp + r_d @ offs[3]
    return c_uss, c_ls, c_ff, c_fpf


def com_velocities(q: GeneralizedState, geom: ChainGeometry,
                   mode: str = "exact"):
    """World COM velocities of the four links.

    ``exact`` differentiates the chain positions (ankle-point velocity plus
    omega x offset for the two foot bodies).  ``paper_literal`` evaluates
    V = omega x R_OC about the knee origin for every body, which coincides
    with ``exact`` only for bodies whose joint axes all pass through O.
    """
    w_a, w_b, w_c, w_d = angular_velocities(q)
    c_uss, c_ls, c_ff, c_fpf = com_positions(q, geom)
    v_uss = np.cross(w_a, c_uss)
    v_ls = np.cross(w_b, c_ls)
    if mode == "paper_literal":
        v_ff = np.cross(w_c, c_ff)
        v_fpf = np.cross(w_d, c_fpf)
    elif mode == "exact":
        bp = ankle_point(q, geom)
        v_bp = np.cross(w_a, bp)
        v_ff = v_bp + np.cross(w_c, c_ff - bp)
        v_fpf = v_bp + np.cross(w_d, c_fpf - bp)
    else:
        raise ValueError(f"unknown velocity mode {mode!r}")
    return v_uss, v_ls, v_ff, v_fpf

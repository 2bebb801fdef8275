"""Nonlinear dq-frame component models and the assembled plant ODE.

Everything is per-unit on the single plant MVA base, angles in radians,
time in seconds. A dq pair composes as d + jq and all branch equations
carry the +jX rotation term of the common synchronous frame, so a branch
at rest satisfies (R - jX) i = v_send - v_recv. Active power is
p = v_d i_d + v_q i_q and reactive power q = v_q i_d - v_d i_q, which makes
a purely capacitive injection carry negative q.

Network layout: converter -> RL filter -> shunt filter capacitor (the
turbine terminal bus) -> lumped array-cable plus plant-transformer branch ->
PCC bus -> grid Thevenin branch, with the synchronous condenser branch also
tied to the PCC. The PCC carries a small shunt capacitance so the node law
is an ODE rather than an algebraic constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

TWO_PI = 2.0 * math.pi
OMEGA0 = TWO_PI * 50.0  # rad/s at 50 Hz

GFL = "gfl"
GFM = "gfm"
NO_CONVERTER = "none"

Q_MODE_REACTIVE = "reactive"
Q_MODE_VOLTAGE = "voltage"

# Fault shunts at least this large are treated as an open circuit.
FAULT_OPEN_THRESHOLD = 1e8


def jrot(v: np.ndarray) -> np.ndarray:
    """Multiply a dq pair by j: (d, q) -> (-q, d)."""
    return np.array([-v[1], v[0]])


def rotate(v: np.ndarray, angle: float) -> np.ndarray:
    """Rotate a dq pair counterclockwise by angle."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def power_pair(v: np.ndarray, i: np.ndarray) -> tuple[float, float]:
    """Active/reactive power of a (voltage, current) pair."""
    return (
        float(v[0] * i[0] + v[1] * i[1]),
        float(v[1] * i[0] - v[0] * i[1]),
    )


# ---------------------------------------------------------------------------
# parameter sets


@dataclass(frozen=True)
class GridParams:
    """Thevenin grid branch: ideal source v_ref behind rg + j xg."""

    rg: float
    xg: float
    v_ref: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.xg) and self.xg > 0.0):
            raise ValueError(f"grid xg must be > 0, got {self.xg}")
        if not (math.isfinite(self.rg) and self.rg >= 0.0):
            raise ValueError(f"grid rg must be >= 0, got {self.rg}")
        # v_ref range is an operating constraint checked at the config layer;
        # the model itself also accepts a shorted source for passivity studies.
        if not (math.isfinite(self.v_ref) and self.v_ref >= 0.0):
            raise ValueError(f"grid v_ref must be >= 0, got {self.v_ref}")


@dataclass(frozen=True)
class ScParams:
    """Synchronous condenser: constant EMF of magnitude e_mag behind the
    subtransient reactance, connected through its unit transformer
    r_tr + j x_tr. e_mag is 1 pu in normal studies; 0 shorts the source for
    passivity checks.

    r_tr lumps the stator, damper-circuit, and transformer losses; the
    default keeps the machine branch mode at roughly 20% damping so that
    adding the condenser never degrades the least-damped low-frequency
    mode of an otherwise stable plant."""

    x_sub: float = 0.17
    r_tr: float = 0.08
    x_tr: float = 0.1
    e_mag: float = 1.0
    enabled: bool = True

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x_sub) and self.x_sub > 0.0):
            raise ValueError(f"sc x_sub must be > 0, got {self.x_sub}")
        if not (math.isfinite(self.r_tr) and self.r_tr >= 0.0):
            raise ValueError(f"sc r_tr must be >= 0, got {self.r_tr}")
        if not (math.isfinite(self.x_tr) and self.x_tr >= 0.0):
            raise ValueError(f"sc x_tr must be >= 0, got {self.x_tr}")
        if not (math.isfinite(self.e_mag) and self.e_mag >= 0.0):
            raise ValueError(f"sc e_mag must be >= 0, got {self.e_mag}")


@dataclass(frozen=True)
class GflParams:
    """Grid-following control gains: PLL, outer power PI, inner current PI.

    The outer loop is deliberately integral-dominant: proportional power
    feedback acts at all frequencies and excites the lightly damped filter
    and cable resonances, while a slow integrator keeps full steady-state
    tracking. The PLL bandwidth sits near the power-loop crossover, which
    reproduces the classic synchronization instability on a very weak grid
    while every stronger case stays comfortably damped."""

    kp_pll: float = 6.0
    ki_pll: float = 1600.0
    kp_pc: float = 0.005
    ki_pc: float = 100.0
    kp_cc: float = 0.2
    ki_cc: float = 20.0

    def __post_init__(self) -> None:
        for name in ("kp_pll", "ki_pll", "kp_pc", "ki_pc", "kp_cc", "ki_cc"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"gfl gain {name} must be > 0, got {v}")


@dataclass(frozen=True)
class GfmParams:
    """Grid-forming (virtual synchronous machine) gains: swing inertia and
    damping, outer voltage PI, inner current PI."""

    j_vsm: float = 0.2
    d_p: float = 50.0
    kp_v: float = 2.0
    ki_v: float = 100.0
    kp_c: float = 0.5
    ki_c: float = 20.0

    def __post_init__(self) -> None:
        for name in ("j_vsm", "d_p", "kp_v", "ki_v", "kp_c", "ki_c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"gfm gain {name} must be > 0, got {v}")


@dataclass(frozen=True)
class FilterCableParams:
    """Converter filter, lumped array-cable/plant-transformer branch and PCC
    shunt. Inductances and capacitances are pu (reactance = omega0 * l,
    capacitive reactance = 1 / (omega0 * c))."""

    rf: float
    lf: float
    cf: float
    ra: float
    la: float
    rtf: float
    ltf: float
    c_pcc: float = 1e-4

    def __post_init__(self) -> None:
        if not self.lf > 0.0:
            raise ValueError(f"filter lf must be > 0, got {self.lf}")
        if not self.cf > 0.0:
            raise ValueError(f"filter cf must be > 0, got {self.cf}")
        if not self.la + self.ltf > 0.0:
            raise ValueError(f"array+transformer inductance must be > 0, got {self.la + self.ltf}")
        if not self.c_pcc > 0.0:
            raise ValueError(f"c_pcc must be > 0, got {self.c_pcc}")
        for name in ("rf", "ra", "rtf"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.la < 0.0 or self.ltf < 0.0:
            raise ValueError("la and ltf must be >= 0")

    @classmethod
    def from_reactances(
        cls,
        rf: float = 0.005,
        xf: float = 0.08,
        x_cf: float = 15.0,
        ra: float = 0.006,
        xa: float = 0.03,
        rtf: float = 0.005,
        xtf: float = 0.06,
        c_pcc: float = 1e-4,
        omega0: float = OMEGA0,
    ) -> "FilterCableParams":
        """Build from engineering reactances at the nominal frequency."""
        return cls(
            rf=rf,
            lf=xf / omega0,
            cf=1.0 / (omega0 * x_cf),
            ra=ra,
            la=xa / omega0,
            rtf=rtf,
            ltf=xtf / omega0,
            c_pcc=c_pcc,
        )


@dataclass(frozen=True)
class RefInputs:
    """Reference and source inputs held constant during one RHS evaluation.

    phi_sc is the condenser EMF angle; it is an outcome of the equilibrium
    solve and then a fixed input for linearization and simulation.
    """

    p_star: float = 0.0
    v_turb_star: float = 1.0
    q_star: float = 0.0
    v_g_ref: float = 1.0
    v_g_angle: float = 0.0
    phi_sc: float = 0.0


@dataclass(frozen=True)
class FaultSpec:
    """Shunt fault resistance applied at a named bus ('pcc' or 'wt_mv')."""

    bus: str
    r_fault: float

    def __post_init__(self) -> None:
        if self.bus not in ("pcc", "wt_mv"):
            raise ValueError(f"fault bus must be 'pcc' or 'wt_mv', got {self.bus!r}")
        if not (math.isfinite(self.r_fault) and self.r_fault > 0.0):
            raise ValueError(f"fault resistance must be > 0, got {self.r_fault}")


# ---------------------------------------------------------------------------
# per-component right-hand sides


def grid_rhs(
    i_g: np.ndarray,
    v_pcc: np.ndarray,
    p: GridParams,
    omega0: float = OMEGA0,
    v_g: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Grid branch: L_g di/dt = -R_g i + j X_g i + v_g - v_pcc."""
    if v_g is None:
        v_g = np.array([p.v_ref, 0.0])
    l_g = p.xg / omega0
    return (-p.rg * i_g + p.xg * jrot(i_g) + v_g - v_pcc) / l_g


def sc_rhs(
    i_sc: np.ndarray,
    v_pcc: np.ndarray,
    p: ScParams,
    phi_sc: float,
    omega0: float = OMEGA0,
) -> np.ndarray:
    """Condenser branch with the subtransient inductance on the left side:

        (X''/omega0) di/dt = -R_tr i + j(X'' + X_tr) i + v_sc - v_pcc

    v_sc is the EMF phasor at angle phi_sc. The transformer resistance enters
    dissipatively (-R_tr i).
    """
    v_sc = p.e_mag * np.array([math.cos(phi_sc), math.sin(phi_sc)])
    l_sub = p.x_sub / omega0
    x_tot = p.x_sub + p.x_tr
    return (-p.r_tr * i_sc + x_tot * jrot(i_sc) + v_sc - v_pcc) / l_sub


def filter_cable_rhs(
    i_f: np.ndarray,
    v_c: np.ndarray,
    i_a: np.ndarray,
    v_pcc: np.ndarray,
    v_inv: np.ndarray,
    p: FilterCableParams,
    omega0: float = OMEGA0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Converter filter branch, shunt capacitor node and lumped array branch.

        L_f  di_f/dt = -R_f i_f + j X_f i_f - v_c + v_inv
        C_f  dv_c/dt = i_f - i_a + j omega0 C_f v_c
        L_at di_a/dt = v_c - R_at i_a + j X_at i_a - v_pcc
    """
    xf = omega0 * p.lf
    di_f = (-p.rf * i_f + xf * jrot(i_f) - v_c + v_inv) / p.lf

    dv_c = (i_f - i_a) / p.cf + omega0 * jrot(v_c)

    r_at = p.ra + p.rtf
    l_at = p.la + p.ltf
    x_at = omega0 * l_at
    di_a = (v_c - r_at * i_a + x_at * jrot(i_a) - v_pcc) / l_at
    return di_f, dv_c, di_a


def pcc_node_rhs(
    v_pcc: np.ndarray,
    i_net: np.ndarray,
    p: FilterCableParams,
    omega0: float = OMEGA0,
) -> np.ndarray:
    """PCC shunt node: C_pcc dv/dt = sum of branch currents into the bus
    + j omega0 C_pcc v."""
    return i_net / p.c_pcc + omega0 * jrot(v_pcc)


def gfl_rhs(
    ctrl: np.ndarray,
    v_c: np.ndarray,
    i_f: np.ndarray,
    p_pc: float,
    q_pc: float,
    p: GflParams,
    refs: RefInputs,
    q_mode: str = Q_MODE_REACTIVE,
    omega0: float = OMEGA0,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Grid-following control: PLL, outer power PI, inner current PI.

    ctrl = [theta_pll, s_pll, gamma_d, gamma_q, o_d, o_q] where theta_pll is
    stored relative to the synchronous frame so its rate is zero at an
    equilibrium; the absolute rate omega0 + d(theta)/dt is reported in the
    info dict. Measurements are the filter-capacitor voltage and converter
    current rotated into the PLL frame; the inverter voltage reference is
    rotated back into the common frame.
    """
    delta, s_pll, gamma_d, gamma_q, o_d, o_q = ctrl

    v_m = rotate(v_c, -delta)
    i_m = rotate(i_f, -delta)

    d_delta = p.kp_pll * v_m[1] + p.ki_pll * s_pll
    d_s = v_m[1]

    e_p = refs.p_star - p_pc
    i_star_d = p.kp_pc * e_p + p.ki_pc * gamma_d

    if q_mode == Q_MODE_REACTIVE:
        e_q = refs.q_star - q_pc
        # raising i_q lowers q, hence the inverted PI output
        i_star_q = -(p.kp_pc * e_q + p.ki_pc * gamma_q)
        d_gamma_q = e_q
    elif q_mode == Q_MODE_VOLTAGE:
        e_v = refs.v_turb_star - math.hypot(v_c[0], v_c[1])
        i_star_q = p.kp_pc * e_v + p.ki_pc * gamma_q
        d_gamma_q = e_v
    else:
        raise ValueError(f"unknown q-channel mode {q_mode!r}")

    i_star = np.array([i_star_d, i_star_q])
    d_o = i_star - i_m

    v_star = v_m + p.kp_cc * (i_star - i_m) + p.ki_cc * np.array([o_d, o_q])
    v_inv = rotate(v_star, delta)

    dctrl = np.array([d_delta, d_s, e_p, d_gamma_q, d_o[0], d_o[1]])
    info = {"theta_dot_abs": omega0 + d_delta, "i_star": i_star, "v_star": v_star}
    return dctrl, v_inv, info


def gfm_rhs(
    ctrl: np.ndarray,
    v_c: np.ndarray,
    i_f: np.ndarray,
    i_a: np.ndarray,
    p_pc: float,
    p: GfmParams,
    refs: RefInputs,
    flt: FilterCableParams,
    omega0: float = OMEGA0,
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Grid-forming control: swing synchronization, outer voltage PI with
    capacitor-current feedforward, inner current PI with inductor
    feedforward.

    ctrl = [theta_pc, omega_pc, m_d, m_q, o_d, o_q], theta_pc relative to the
    synchronous frame (absolute rate is omega0 + omega_pc). The swing advances
    the applied EMF angle when power falls short of its reference:

        J domega/dt = p* - p_pc - D_p omega,   dtheta/dt = omega
    """
    delta, omega_pc, m_d, m_q, o_d, o_q = ctrl

    v_m = rotate(v_c, delta)
    i_m = rotate(i_f, delta)
    i_ff = rotate(i_a, delta)

    d_delta = omega_pc
    d_omega = (refs.p_star - p_pc - p.d_p * omega_pc) / p.j_vsm

    v_star = np.array([refs.v_turb_star, 0.0])
    e_v = v_star - v_m
    x_cf = 1.0 / (omega0 * flt.cf)
    i_star = i_ff + p.kp_v * e_v + p.ki_v * np.array([m_d, m_q]) + jrot(v_m) / x_cf

    e_i = i_star - i_m
    xf = omega0 * flt.lf
    v_star_i = v_m + p.kp_c * e_i + p.ki_c * np.array([o_d, o_q]) + xf * jrot(i_m)
    v_inv = rotate(v_star_i, -delta)

    dctrl = np.array([d_delta, d_omega, e_v[0], e_v[1], e_i[0], e_i[1]])
    info = {"theta_dot_abs": omega0 + omega_pc, "i_star": i_star, "v_star_i": v_star_i}
    return dctrl, v_inv, info


# ---------------------------------------------------------------------------
# assembled system


class SystemModel:
    """One scenario's assembled ODE: x_dot = rhs(x, refs).

    State layout (dq pairs contiguous):
        i_g, [i_sc], [i_f], v_c, i_a, v_pcc, [6 controller states]
    i_sc appears only with the condenser enabled, i_f and the controller
    block only when a converter is present. Dimensions: converter without
    condenser 16, with condenser 18; the passive (converter-open) network is
    8 or 10.
    """

    def __init__(
        self,
        grid: GridParams,
        network: FilterCableParams,
        control: str = GFL,
        gfl: Optional[GflParams] = None,
        gfm: Optional[GfmParams] = None,
        sc: Optional[ScParams] = None,
        q_mode: str = Q_MODE_REACTIVE,
        omega0: float = OMEGA0,
    ) -> None:
        if control not in (GFL, GFM, NO_CONVERTER):
            raise ValueError(f"control must be one of gfl/gfm/none, got {control!r}")
        if q_mode not in (Q_MODE_REACTIVE, Q_MODE_VOLTAGE):
            raise ValueError(f"q_mode must be reactive or voltage, got {q_mode!r}")
        self.grid = grid
        self.network = network
        self.control = control
        self.gfl = gfl if gfl is not None else (GflParams() if control == GFL else None)
        self.gfm = gfm if gfm is not None else (GfmParams() if control == GFM else None)
        self.sc = sc if (sc is not None and sc.enabled) else None
        self.q_mode = q_mode
        self.omega0 = omega0

        labels = ["i_g_d", "i_g_q"]
        if self.sc is not None:
            labels += ["i_sc_d", "i_sc_q"]
        if control != NO_CONVERTER:
            labels += ["i_f_d", "i_f_q"]
        labels += ["v_c_d", "v_c_q", "i_a_d", "i_a_q", "v_pcc_d", "v_pcc_q"]
        if control == GFL:
            labels += ["theta_pll", "s_pll", "gamma_d", "gamma_q", "o_d", "o_q"]
        elif control == GFM:
            labels += ["theta_pc", "omega_pc", "m_d", "m_q", "o_d", "o_q"]
        self.labels: tuple[str, ...] = tuple(labels)
        self.n = len(labels)
        self._idx = {name: k for k, name in enumerate(labels)}

    def index(self, label: str) -> int:
        return self._idx[label]

    def pair(self, x: np.ndarray, label_d: str) -> np.ndarray:
        k = self._idx[label_d]
        return x[k : k + 2]

    @property
    def has_sc(self) -> bool:
        return self.sc is not None

    # -- fault plumbing ------------------------------------------------------

    @staticmethod
    def _fault_mode(fault: Optional[FaultSpec], c_bus: float, dt: Optional[float]) -> str:
        """Pick the node treatment for an active fault.

        Very large resistances are an open circuit (no-op). A shunt whose
        R*C time constant is short relative to the integration step is
        handled quasi-statically (the node equation is solved algebraically);
        otherwise it joins the node ODE as an ordinary conductance.
        """
        if fault is None or fault.r_fault >= FAULT_OPEN_THRESHOLD:
            return "off"
        if dt is not None and fault.r_fault * c_bus <= 2.0 * dt:
            return "algebraic"
        return "shunt"

    # -- right-hand side -----------------------------------------------------

    def rhs(
        self,
        x: np.ndarray,
        refs: RefInputs,
        fault: Optional[FaultSpec] = None,
        dt: Optional[float] = None,
    ) -> np.ndarray:
        """Assembled state derivative; fault (if given) is currently active."""
        net = self.network
        w0 = self.omega0

        i_g = self.pair(x, "i_g_d")
        i_sc = self.pair(x, "i_sc_d") if self.sc is not None else None
        has_conv = self.control != NO_CONVERTER
        i_f = self.pair(x, "i_f_d") if has_conv else np.zeros(2)
        v_c_state = self.pair(x, "v_c_d")
        i_a = self.pair(x, "i_a_d")
        v_pcc_state = self.pair(x, "v_pcc_d")

        fault_bus = fault.bus if (fault is not None and fault.r_fault < FAULT_OPEN_THRESHOLD) else None
        mode_vc = self._fault_mode(fault, net.cf, dt) if fault_bus == "wt_mv" else "off"
        mode_pcc = self._fault_mode(fault, net.c_pcc, dt) if fault_bus == "pcc" else "off"

        # resolve effective node voltages; an algebraic fault pins the bus to
        # its quasi-steady value v = i_net / (1/r - j w C)
        v_c = v_c_state
        v_pcc = v_pcc_state

        dx = np.empty(self.n)

        # converter control needs v_c; compute network-side currents that feed
        # node laws first, then controller, then branch derivatives.
        if mode_pcc == "algebraic":
            i_into_pcc = i_a + i_g + (i_sc if i_sc is not None else 0.0)
            zi = complex(i_into_pcc[0], i_into_pcc[1])
            zv = zi / complex(1.0 / fault.r_fault, -w0 * net.c_pcc)
            v_pcc = np.array([zv.real, zv.imag])
        if mode_vc == "algebraic":
            i_net_c = i_f - i_a
            zi = complex(i_net_c[0], i_net_c[1])
            zv = zi / complex(1.0 / fault.r_fault, -w0 * net.cf)
            v_c = np.array([zv.real, zv.imag])

        powers = self._interface_powers(v_c, i_a, i_g, i_sc, refs)
        p_pc, q_pc = powers["p_pc"], powers["q_pc"]

        v_inv = None
        if self.control == GFL:
            ctrl = x[-6:]
            dctrl, v_inv, _ = gfl_rhs(ctrl, v_c, i_f, p_pc, q_pc, self.gfl, refs, self.q_mode, w0)
        elif self.control == GFM:
            ctrl = x[-6:]
            dctrl, v_inv, _ = gfm_rhs(ctrl, v_c, i_f, i_a, p_pc, self.gfm, refs, net, w0)

        v_g = refs.v_g_ref * np.array([math.cos(refs.v_g_angle), math.sin(refs.v_g_angle)])
        dx[0:2] = grid_rhs(i_g, v_pcc, self.grid, w0, v_g=v_g)

        k = 2
        if i_sc is not None:
            dx[k : k + 2] = sc_rhs(i_sc, v_pcc, self.sc, refs.phi_sc, w0)
            k += 2

        if has_conv:
            di_f, dv_c, di_a = filter_cable_rhs(i_f, v_c, i_a, v_pcc, v_inv, net, w0)
            dx[k : k + 2] = di_f
            k += 2
        else:
            _, dv_c, di_a = filter_cable_rhs(np.zeros(2), v_c, i_a, v_pcc, np.zeros(2), net, w0)

        # v_c node
        if mode_vc == "algebraic":
            dx[k : k + 2] = (v_c - v_c_state) / 1e-3  # state tracks the pinned bus
        elif mode_vc == "shunt":
            dx[k : k + 2] = dv_c - v_c / (fault.r_fault * net.cf)
        else:
            dx[k : k + 2] = dv_c
        k += 2

        dx[k : k + 2] = di_a
        k += 2

        i_into_pcc = i_a + i_g + (i_sc if i_sc is not None else 0.0)
        if mode_pcc == "algebraic":
            dx[k : k + 2] = (v_pcc - v_pcc_state) / 1e-3
        elif mode_pcc == "shunt":
            dx[k : k + 2] = (
                pcc_node_rhs(v_pcc, i_into_pcc, net, w0) - v_pcc / (fault.r_fault * net.c_pcc)
            )
        else:
            dx[k : k + 2] = pcc_node_rhs(v_pcc, i_into_pcc, net, w0)
        k += 2

        if has_conv:
            dx[k : k + 6] = dctrl

        return dx

    # -- measurements ---------------------------------------------------------

    def _interface_powers(self, v_c, i_a, i_g, i_sc, refs) -> dict:
        p_pc, q_pc = power_pair(v_c, i_a)
        v_g = refs.v_g_ref * np.array([math.cos(refs.v_g_angle), math.sin(refs.v_g_angle)])
        p_g, q_g = power_pair(v_g, i_g)
        out = {"p_pc": p_pc, "q_pc": q_pc, "p_g": p_g, "q_g": q_g}
        if i_sc is not None:
            v_sc = self.sc.e_mag * np.array([math.cos(refs.phi_sc), math.sin(refs.phi_sc)])
            out["p_sc"], out["q_sc"] = power_pair(v_sc, i_sc)
        else:
            out["p_sc"], out["q_sc"] = 0.0, 0.0
        return out

    def measure_powers(self, x: np.ndarray, refs: RefInputs) -> dict:
        """Interface powers: converter output (turbine bus into the array
        branch), grid source, condenser EMF."""
        i_sc = self.pair(x, "i_sc_d") if self.sc is not None else None
        return self._interface_powers(
            self.pair(x, "v_c_d"), self.pair(x, "i_a_d"), self.pair(x, "i_g_d"), i_sc, refs
        )

    def measure(self, x: np.ndarray, refs: RefInputs) -> dict:
        out = self.measure_powers(x, refs)
        v_c = self.pair(x, "v_c_d")
        v_pcc = self.pair(x, "v_pcc_d")
        out["v_c_mag"] = math.hypot(v_c[0], v_c[1])
        out["v_pcc_mag"] = math.hypot(v_pcc[0], v_pcc[1])
        return out

    # -- frame rotation helper -------------------------------------------------

    def rotated_state(self, x: np.ndarray, alpha: float) -> np.ndarray:
        """State rotated by a common frame angle alpha.

        dq pairs rotate by alpha; the GFL PLL angle shifts by +alpha and the
        GFM swing angle by -alpha (their measurement transforms are mutually
        inverse). Integrator states are frame-local and unchanged. Callers
        rotate source angles (v_g_angle, phi_sc) in RefInputs themselves.
        """
        y = np.array(x, dtype=float)
        for lab in ("i_g_d", "i_sc_d", "i_f_d", "v_c_d", "i_a_d", "v_pcc_d"):
            if lab in self._idx:
                k = self._idx[lab]
                y[k : k + 2] = rotate(x[k : k + 2], alpha)
        if self.control == GFL:
            y[self._idx["theta_pll"]] += alpha
        elif self.control == GFM:
            y[self._idx["theta_pc"]] -= alpha
        return y


def rotated_refs(refs: RefInputs, alpha: float) -> RefInputs:
    """Source angles advanced by a common frame angle."""
    return replace(refs, v_g_angle=refs.v_g_angle + alpha, phi_sc=refs.phi_sc + alpha)

"""Equilibrium solver: damped Newton on the assembled RHS plus closure
equations.

Free unknowns beyond the state vector: the condenser EMF angle (closed by
zero condenser active power at the EMF) and, for the grid-following
converter in reactive-power mode, the reactive reference that places the
turbine terminal voltage on its target. The grid source angle is fixed at
zero, which removes the rotational null space from the Newton system.

Newton iterates on a row-scaled residual (each branch/node row multiplied by
its inductance/capacitance, controller rows normalized by their gain sums)
so the Jacobian is well conditioned; convergence is judged on the true
unscaled RHS with target 1e-10 and acceptance 1e-8 in the ∞-norm. A cold
start that stalls is retried along a source/power ramp (continuation) before
the case is declared non-convergent (residual stuck between 1e-8 and 1e-3)
or infeasible (stuck above 1e-3, e.g. power beyond the loadability limit).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .components import (
    GFL,
    GFM,
    NO_CONVERTER,
    OMEGA0,
    Q_MODE_REACTIVE,
    Q_MODE_VOLTAGE,
    RefInputs,
    SystemModel,
    power_pair,
    rotate,
)
from .config import OperatingPoint, Scenario, build_model, refs_for
from .linearize import numjac

RESIDUAL_TARGET = 1e-10
RESIDUAL_ACCEPT = 1e-8
INFEASIBLE_FLOOR = 1e-3
MAX_ITERATIONS = 50
MAX_HALVINGS = 8
VOLTAGE_BAND = (0.5, 1.5)


class NonConvergenceError(RuntimeError):
    """Newton stalled with a small-but-not-converged residual."""

    def __init__(self, iterations: int, final_residual: float, detail: str = ""):
        msg = f"no convergence after {iterations} iterations, residual {final_residual:.3e}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.iterations = iterations
        self.final_residual = final_residual


class InfeasibleError(RuntimeError):
    """Residual stagnated far from zero: no equilibrium at this operating
    point (e.g. requested power beyond the network's loadability)."""

    def __init__(self, iterations: int, final_residual: float, detail: str = ""):
        msg = f"no equilibrium found, residual stuck at {final_residual:.3e}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.iterations = iterations
        self.final_residual = final_residual


@dataclass(frozen=True)
class EquilibriumPoint:
    """A solved operating point: state, resolved reference inputs, and
    solver diagnostics."""

    state: np.ndarray
    refs: RefInputs
    phi_sc: float
    q_star: Optional[float]
    residual_norm: float
    iterations: int


def _unknown_layout(model: SystemModel) -> tuple[bool, bool]:
    solves_phi = model.has_sc
    solves_q = model.control == GFL and model.q_mode == Q_MODE_REACTIVE
    return solves_phi, solves_q


def _refs_from_z(model: SystemModel, z: np.ndarray, refs: RefInputs) -> RefInputs:
    solves_phi, solves_q = _unknown_layout(model)
    k = model.n
    if solves_phi:
        refs = replace(refs, phi_sc=float(z[k]))
        k += 1
    if solves_q:
        refs = replace(refs, q_star=float(z[k]))
    return refs


def _residual(model: SystemModel, z: np.ndarray, refs: RefInputs) -> np.ndarray:
    solves_phi, solves_q = _unknown_layout(model)
    x = z[: model.n]
    r = _refs_from_z(model, z, refs)
    parts = [model.rhs(x, r)]
    if solves_phi:
        i_sc = model.pair(x, "i_sc_d")
        v_sc = model.sc.e_mag * np.array([math.cos(r.phi_sc), math.sin(r.phi_sc)])
        parts.append(np.array([power_pair(v_sc, i_sc)[0]]))
    if solves_q:
        v_c = model.pair(x, "v_c_d")
        parts.append(np.array([math.hypot(v_c[0], v_c[1]) - r.v_turb_star]))
    return np.concatenate(parts)


def _row_scale(model: SystemModel) -> np.ndarray:
    """Multipliers that undo the stiff 1/L, 1/C factors row by row."""
    net = model.network
    w0 = model.omega0
    scale = {
        "i_g": model.grid.xg / w0,
        "i_sc": model.sc.x_sub / w0 if model.has_sc else 1.0,
        "i_f": net.lf,
        "v_c": net.cf,
        "i_a": net.la + net.ltf,
        "v_pcc": net.c_pcc,
    }
    out = []
    for lab in model.labels:
        base = lab.rsplit("_", 1)[0] if lab.endswith(("_d", "_q")) else lab
        if base in scale:
            out.append(scale[base])
        elif lab == "theta_pll":
            g = model.gfl
            out.append(1.0 / (1.0 + g.kp_pll + g.ki_pll))
        elif lab == "omega_pc":
            out.append(model.gfm.j_vsm)
        else:
            out.append(1.0)
    solves_phi, solves_q = _unknown_layout(model)
    out += [1.0] * (int(solves_phi) + int(solves_q))
    return np.array(out)


def _newton(
    model: SystemModel,
    z0: np.ndarray,
    refs: RefInputs,
    scale: np.ndarray,
    max_iter: int = MAX_ITERATIONS,
) -> tuple[np.ndarray, int, float, bool]:
    """Damped Newton; returns (z, iterations, true residual norm, converged)."""
    z = np.asarray(z0, dtype=float).copy()

    def scaled(zz: np.ndarray) -> np.ndarray:
        return scale * _residual(model, zz, refs)

    f_raw = _residual(model, z, refs)
    true_norm = float(np.max(np.abs(f_raw)))
    for it in range(1, max_iter + 1):
        if true_norm < RESIDUAL_TARGET:
            return z, it - 1, true_norm, True
        f_s = scale * f_raw
        jac = numjac(scaled, z, eps=1e-7)
        try:
            step = np.linalg.solve(jac, -f_s)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -f_s, rcond=None)[0]
        merit = float(np.linalg.norm(f_s))
        lam = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            z_try = z + lam * step
            f_try = _residual(model, z_try, refs)
            if float(np.linalg.norm(scale * f_try)) < merit:
                z, f_raw = z_try, f_try
                accepted = True
                break
            lam *= 0.5
        true_norm = float(np.max(np.abs(f_raw)))
        if not accepted:
            return z, it, true_norm, true_norm < RESIDUAL_ACCEPT
    return z, max_iter, true_norm, true_norm < RESIDUAL_ACCEPT


def initial_guess(model: SystemModel, refs: RefInputs) -> np.ndarray:
    """Warm-start state: linear phasor solve of the series R-L network (shunt
    capacitors left out) with the converter as a constant-P injection,
    controller integrators back-computed from the steady relations."""
    net = model.network
    w0 = model.omega0

    v_g = refs.v_g_ref * complex(math.cos(refs.v_g_angle), math.sin(refs.v_g_angle))
    z_g = complex(model.grid.rg, -model.grid.xg)
    z_at = complex(net.ra + net.rtf, -w0 * (net.la + net.ltf))
    z_f = complex(net.rf, -w0 * net.lf)
    has_conv = model.control != NO_CONVERTER
    has_sc = model.has_sc
    e_sc = complex(model.sc.e_mag, 0.0) if has_sc else 0.0
    z_sc = complex(model.sc.r_tr, -(model.sc.x_sub + model.sc.x_tr)) if has_sc else None

    p = refs.p_star if has_conv else 0.0
    v_c = complex(1.0, 0.0)
    v_pcc = complex(1.0, 0.0)
    i_a = complex(0.0, 0.0)
    for _ in range(3):
        i_a = (p / v_c).conjugate() if p != 0.0 else complex(0.0, 0.0)
        y = 1.0 / z_g + (1.0 / z_sc if has_sc else 0.0)
        v_pcc = (i_a + v_g / z_g + (e_sc / z_sc if has_sc else 0.0)) / y
        v_c = v_pcc + z_at * i_a if has_conv else v_pcc

    i_g = (v_g - v_pcc) / z_g
    i_sc = (e_sc - v_pcc) / z_sc if has_sc else None
    i_f = i_a if has_conv else complex(0.0, 0.0)
    v_inv = v_c + z_f * i_f

    x = np.zeros(model.n)

    def put(label: str, value: complex) -> None:
        k = model.index(label)
        x[k] = value.real
        x[k + 1] = value.imag

    put("i_g_d", i_g)
    if has_sc:
        put("i_sc_d", i_sc)
    if has_conv:
        put("i_f_d", i_f)
    put("v_c_d", v_c)
    put("i_a_d", i_a)
    put("v_pcc_d", v_pcc)

    if model.control == GFL:
        g = model.gfl
        delta = math.atan2(v_c.imag, v_c.real)
        spin = complex(math.cos(delta), math.sin(delta))
        i_m = i_f / spin
        v_m = v_c / spin
        v_star = v_inv / spin
        x[model.index("theta_pll")] = delta
        x[model.index("gamma_d")] = i_m.real / g.ki_pc
        sign = -1.0 if model.q_mode == Q_MODE_REACTIVE else 1.0
        x[model.index("gamma_q")] = sign * i_m.imag / g.ki_pc
        o = (v_star - v_m) / g.ki_cc
        x[model.index("o_d")] = o.real
        x[model.index("o_q")] = o.imag
    elif model.control == GFM:
        g = model.gfm
        delta = -math.atan2(v_c.imag, v_c.real)
        spin = complex(math.cos(delta), math.sin(delta))
        i_m = i_f * spin
        i_ff = i_a * spin
        v_m = v_c * spin
        v_star = v_inv * spin
        x_cf = 1.0 / (w0 * net.cf)
        e_v = complex(refs.v_turb_star, 0.0) - v_m
        x[model.index("theta_pc")] = delta
        m = (i_m - i_ff - g.kp_v * e_v - 1j * v_m / x_cf) / g.ki_v
        x[model.index("m_d")] = m.real
        x[model.index("m_q")] = m.imag
        xf = w0 * net.lf
        o = (v_star - v_m - 1j * xf * i_m) / g.ki_c
        x[model.index("o_d")] = o.real
        x[model.index("o_q")] = o.imag
    return x


def _pack(model: SystemModel, x: np.ndarray) -> np.ndarray:
    solves_phi, solves_q = _unknown_layout(model)
    extras = []
    if solves_phi:
        extras.append(0.0)
    if solves_q:
        v_c = model.pair(x, "v_c_d")
        i_a = model.pair(x, "i_a_d")
        extras.append(power_pair(v_c, i_a)[1])
    return np.concatenate([x, np.array(extras)]) if extras else np.asarray(x, float).copy()


def _ramped_refs(refs: RefInputs, lam: float) -> RefInputs:
    p0 = min(0.1, refs.p_star)
    return replace(
        refs,
        v_g_ref=1.0 + (refs.v_g_ref - 1.0) * lam,
        v_turb_star=1.0 + (refs.v_turb_star - 1.0) * lam,
        p_star=p0 + (refs.p_star - p0) * lam,
    )


def solve_equilibrium(model: SystemModel, refs: RefInputs) -> EquilibriumPoint:
    """Find the equilibrium for the given reference inputs.

    Raises NonConvergenceError or InfeasibleError when no acceptable solution
    is found; a converged solution outside the (0.5, 1.5) pu voltage sanity
    band is also reported infeasible.
    """
    scale = _row_scale(model)
    z0 = _pack(model, initial_guess(model, refs))
    z, iters, true_norm, ok = _newton(model, z0, refs, scale)
    total_iters = iters

    if not ok:
        # continuation: walk the sources/power from an easy point to the target
        warm: Optional[np.ndarray] = None
        for lam in (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0):
            r_lam = _ramped_refs(refs, lam)
            z_start = warm if warm is not None else _pack(model, initial_guess(model, r_lam))
            z_s, it_s, tn_s, ok_s = _newton(model, z_start, r_lam, scale)
            total_iters += it_s
            if not ok_s:
                break
            warm = z_s
        if warm is not None:
            z, iters, true_norm, ok = _newton(model, warm, refs, scale)
            total_iters += iters
        if not ok:
            if true_norm > INFEASIBLE_FLOOR:
                raise InfeasibleError(total_iters, true_norm)
            raise NonConvergenceError(total_iters, true_norm)

    x = z[: model.n]
    refs_out = _refs_from_z(model, z, refs)
    for lab in ("v_c_d", "v_pcc_d"):
        mag = float(np.hypot(*model.pair(x, lab)))
        if not VOLTAGE_BAND[0] < mag < VOLTAGE_BAND[1]:
            raise InfeasibleError(
                total_iters,
                true_norm,
                detail=f"|{lab[:-2]}| = {mag:.3f} pu outside the sanity band {VOLTAGE_BAND}",
            )
    solves_phi, solves_q = _unknown_layout(model)
    return EquilibriumPoint(
        state=x,
        refs=refs_out,
        phi_sc=refs_out.phi_sc,
        q_star=refs_out.q_star if solves_q else None,
        residual_norm=true_norm,
        iterations=total_iters,
    )


def solve_operating_point(scenario: Scenario, op: Optional[OperatingPoint] = None) -> EquilibriumPoint:
    """Scenario-level wrapper: build the model and solve its equilibrium."""
    if op is not None:
        scenario = replace(scenario, op=op)
    return solve_equilibrium(build_model(scenario), refs_for(scenario))

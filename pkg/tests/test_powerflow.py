"""Equilibrium solver checks.

The heavyweight oracle is an independent complex-phasor power flow built on
scipy.optimize.fsolve in the standard electrical convention. It shares no
code with the solver under test; agreement on frame-invariant quantities
(voltage magnitudes, active powers) pins down the network solution.
"""

import cmath
import math

import numpy as np
import pytest
from scipy.optimize import fsolve

from wppsc.components import GFL, GFM, NO_CONVERTER, OMEGA0, Q_MODE_REACTIVE
from wppsc.config import GRID_CASES, OperatingPoint, Scenario, build_model, refs_for
from wppsc.netbase import GridCase, impedance_from_scr_xr
from wppsc.powerflow import (
    EquilibriumPoint,
    InfeasibleError,
    _pack,
    initial_guess,
    solve_equilibrium,
    solve_operating_point,
)
from wppsc.sim import integrate


def scenario(case="normal", control=GFL, with_sc=True, op=(1.0, 1.0, 1.0), **kw):
    return Scenario(
        name="pf",
        grid=GRID_CASES[case],
        control=control,
        with_sc=with_sc,
        op=OperatingPoint(*op),
        **kw,
    )


def phasor_oracle(case, with_sc, p, v_turb, v_g, sc=None, net=None):
    """Standard-convention power flow: P source + voltage magnitude constraint
    at the turbine bus, Thevenin grid, optional zero-P EMF branch at PCC.

    Returns (|v_pcc|, p_g) with p_g measured at the grid source, current
    oriented grid -> PCC.
    """
    z = impedance_from_scr_xr(GRID_CASES[case])
    zg = complex(z.r, z.x)
    zat = complex(0.011, 0.09)  # array cable + plant transformer defaults
    b_pcc = OMEGA0 * 1e-4
    if net is not None:
        zat = complex(net.ra + net.rtf, net.xa + net.xtf)
        b_pcc = OMEGA0 * net.c_pcc
    if sc is None:
        x_sc, r_sc, e_sc = 0.17 + 0.1, 0.08, 1.0
    else:
        x_sc, r_sc, e_sc = sc.x_sub + sc.x_tr, sc.r_tr, sc.e_mag
    zsc = complex(r_sc, x_sc)

    def eqs(u):
        v_c = complex(u[0], u[1])
        v_p = complex(u[2], u[3])
        q = u[4]
        i_a = ((p + 1j * q) / v_c).conjugate()
        i_g = (v_g - v_p) / zg
        kcl = i_a + i_g - 1j * b_pcc * v_p
        out = [abs(v_c) ** 2 - v_turb**2]
        kvl = v_c - v_p - zat * i_a
        out += [kvl.real, kvl.imag]
        if with_sc:
            phi = u[5]
            e = e_sc * cmath.exp(1j * phi)
            i_sc = (e - v_p) / zsc
            kcl += i_sc
            out += [kcl.real, kcl.imag, (e * i_sc.conjugate()).real]
        else:
            out += [kcl.real, kcl.imag]
        return out

    u0 = [v_turb, 0.0, 1.0, 0.0, 0.0] + ([0.0] if with_sc else [])
    sol, info, ier, msg = fsolve(eqs, u0, full_output=True)
    assert ier == 1, msg
    v_p = complex(sol[2], sol[3])
    i_g = (v_g - v_p) / zg
    return abs(v_p), (v_g * i_g.conjugate()).real


def test_no_load_passive_matches_linear_network():
    # at zero export the only currents are shunt-capacitor charging; the
    # network is linear so the phasor solution is exact
    s = scenario("strong", control=NO_CONVERTER, with_sc=False, op=(1.0, 1.0, 0.0))
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    assert eq.residual_norm < 1e-10

    z = impedance_from_scr_xr(GRID_CASES["strong"])
    zg = complex(z.r, z.x)
    net = model.network
    zat = complex(net.ra + net.rtf, OMEGA0 * (net.la + net.ltf))
    b_cf = OMEGA0 * net.cf
    b_pcc = OMEGA0 * net.c_pcc
    # unknowns (v_c, v_pcc): filter-cap KCL folded into the branch KVL, then
    # the PCC node law against the Thevenin source
    a = np.array(
        [
            [1.0 + 1j * b_cf * zat, -1.0],
            [-1j * b_cf, -(1.0 / zg + 1j * b_pcc)],
        ]
    )
    v_c_ph, v_p_ph = np.linalg.solve(a, np.array([0.0, -1.0 / zg]))
    i_g_ph = (1.0 - v_p_ph) / zg

    v_c = model.pair(eq.state, "v_c_d")
    v_p = model.pair(eq.state, "v_pcc_d")
    i_g = model.pair(eq.state, "i_g_d")
    assert math.hypot(*v_c) == pytest.approx(abs(v_c_ph), abs=1e-8)
    assert math.hypot(*v_p) == pytest.approx(abs(v_p_ph), abs=1e-8)
    assert math.hypot(*i_g) == pytest.approx(abs(i_g_ph), abs=1e-8)
    # light capacitive rise above the 1.0 pu source
    assert 1.0 < abs(v_p_ph) < 1.05


@pytest.mark.parametrize("with_sc", [False, True])
def test_gfm_weak_matches_independent_phasor_solution(with_sc):
    s = scenario("weak", control=GFM, with_sc=with_sc)
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    v_pcc = model.pair(eq.state, "v_pcc_d")
    got_vp = math.hypot(v_pcc[0], v_pcc[1])
    got_pg = model.measure_powers(eq.state, eq.refs)["p_g"]

    ref_vp, ref_pg = phasor_oracle("weak", with_sc, p=1.0, v_turb=1.0, v_g=1.0)
    assert got_vp == pytest.approx(ref_vp, abs=1e-6)
    assert got_pg == pytest.approx(ref_pg, abs=1e-6)
    # exporting plant: the grid source absorbs almost 1 pu
    assert ref_pg < 0.0
    assert 0.85 <= -ref_pg <= 1.0


@pytest.mark.parametrize("case", ["weak", "normal", "strong"])
def test_gfl_reactive_matches_independent_phasor_solution(case):
    s = scenario(case, control=GFL, with_sc=True, op=(1.0, 1.08, 0.9))
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    v_pcc = model.pair(eq.state, "v_pcc_d")
    got_vp = math.hypot(v_pcc[0], v_pcc[1])
    got_pg = model.measure_powers(eq.state, eq.refs)["p_g"]
    ref_vp, ref_pg = phasor_oracle(case, True, p=0.9, v_turb=1.08, v_g=1.0)
    assert got_vp == pytest.approx(ref_vp, abs=1e-6)
    assert got_pg == pytest.approx(ref_pg, abs=1e-6)


def test_turbine_bus_magnitude_constraint_and_solved_q():
    s = scenario("normal", control=GFL, with_sc=False, op=(1.0, 1.08, 0.8))
    assert s.q_mode == Q_MODE_REACTIVE
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    v_c = model.pair(eq.state, "v_c_d")
    assert math.hypot(v_c[0], v_c[1]) == pytest.approx(1.08, abs=1e-8)
    assert eq.q_star is not None
    assert eq.refs.q_star == eq.q_star


def test_gfm_turbine_bus_magnitude_from_voltage_loop():
    s = scenario("strong", control=GFM, with_sc=True, op=(0.92, 0.92, 1.0))
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    v_c = model.pair(eq.state, "v_c_d")
    assert math.hypot(v_c[0], v_c[1]) == pytest.approx(0.92, abs=1e-8)
    assert eq.q_star is None


def test_postconditions_power_tracking_and_sc_float():
    for control in (GFL, GFM):
        s = scenario("normal", control=control, with_sc=True)
        model = build_model(s)
        eq = solve_equilibrium(model, refs_for(s))
        pw = model.measure_powers(eq.state, eq.refs)
        assert pw["p_pc"] == pytest.approx(1.0, abs=1e-6)
        assert abs(pw["p_sc"]) < 0.01


def test_power_balance_closes():
    # source powers equal series-resistance dissipation: the converter and
    # condenser branches only shuffle power, they do not create it
    s = scenario("weak", control=GFM, with_sc=True)
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    pw = model.measure_powers(eq.state, eq.refs)
    i_g = model.pair(eq.state, "i_g_d")
    i_sc = model.pair(eq.state, "i_sc_d")
    i_a = model.pair(eq.state, "i_a_d")
    net = model.network
    loss = (
        model.grid.rg * (i_g @ i_g)
        + model.sc.r_tr * (i_sc @ i_sc)
        + (net.ra + net.rtf) * (i_a @ i_a)
    )
    assert pw["p_pc"] + pw["p_g"] + pw["p_sc"] == pytest.approx(loss, abs=1e-9)


def test_infeasible_point_raises():
    s = Scenario(
        name="beyond-loadability",
        grid=GridCase(scr=0.2, x_r=5.0),
        control=GFM,
        with_sc=False,
        op=OperatingPoint(1.0, 1.0, 1.0),
    )
    model = build_model(s)
    with pytest.raises(InfeasibleError) as exc:
        solve_equilibrium(model, refs_for(s))
    assert exc.value.final_residual > 1e-3
    assert exc.value.iterations > 0


def test_initial_guess_structure():
    s = scenario("strong", control=GFL, with_sc=True)
    model = build_model(s)
    refs = refs_for(s)
    x0 = initial_guess(model, refs)
    assert x0.shape == (model.n,)
    # unit voltage seeds, near-rated current seed on the export path
    assert x0[model.index("v_c_d")] == pytest.approx(1.0, rel=0.1)
    assert x0[model.index("v_pcc_d")] == pytest.approx(1.0, rel=0.1)
    assert abs(x0[model.index("i_a_d")] - 1.0) <= 0.2
    z = _pack(model, x0)
    # one trailing slot for the condenser angle, one for solved q; both zero
    assert z.shape == (model.n + 2,)
    assert z[model.n] == 0.0


def test_initial_guess_no_load_passive():
    s = scenario("normal", control=NO_CONVERTER, with_sc=False, op=(1.0, 1.0, 0.0))
    model = build_model(s)
    x0 = initial_guess(model, refs_for(s))
    assert np.allclose(x0[model.index("i_g_d") : model.index("i_g_d") + 2], 0.0, atol=1e-12)
    assert x0[model.index("v_pcc_d")] == pytest.approx(1.0, abs=1e-12)


def test_solve_operating_point_override():
    s = scenario("normal", control=GFM, with_sc=True)
    eq = solve_operating_point(s, op=OperatingPoint(1.08, 1.08, 0.5))
    assert isinstance(eq, EquilibriumPoint)
    assert eq.refs.v_g_ref == pytest.approx(1.08)
    assert eq.refs.p_star == pytest.approx(0.5)
    assert eq.residual_norm < 1e-8


def test_reference_frame_choice_does_not_change_physics():
    s = scenario("weak", control=GFM, with_sc=True)
    model = build_model(s)
    refs0 = refs_for(s)
    eq0 = solve_equilibrium(model, refs0)
    from dataclasses import replace

    eq1 = solve_equilibrium(model, replace(refs0, v_g_angle=0.7))
    for eq, tag in ((eq0, "base"), (eq1, "rotated")):
        assert eq.residual_norm < 1e-8, tag
    v0 = model.pair(eq0.state, "v_pcc_d")
    v1 = model.pair(eq1.state, "v_pcc_d")
    assert math.hypot(*v0) == pytest.approx(math.hypot(*v1), abs=1e-8)
    p0 = model.measure_powers(eq0.state, eq0.refs)
    p1 = model.measure_powers(eq1.state, eq1.refs)
    for key in ("p_pc", "p_g", "p_sc", "q_pc"):
        assert p0[key] == pytest.approx(p1[key], abs=1e-7), key


def test_equilibrium_is_stationary_under_integration():
    # short hold; the long-horizon drift bound lives in the acceptance suite
    s = scenario("normal", control=GFM, with_sc=True)
    model = build_model(s)
    eq = solve_equilibrium(model, refs_for(s))
    ts = integrate(model, eq.state, eq.refs, t_end=1.0, dt=2e-4)
    final = np.array([ts.columns[name][-1] for name in model.labels])
    assert np.max(np.abs(final - eq.state)) < 1e-6


def test_all_three_cases_solve_at_rated_export():
    for case in ("weak", "normal", "strong"):
        for control in (GFL, GFM):
            for with_sc in (False, True):
                s = scenario(case, control=control, with_sc=with_sc)
                eq = solve_equilibrium(build_model(s), refs_for(s))
                assert eq.residual_norm < 1e-8, (case, control, with_sc)

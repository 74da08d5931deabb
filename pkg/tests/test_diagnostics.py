import math
from dataclasses import replace

import numpy as np
import pytest

from unipor import diagnostics as dg
from unipor.grid import Grid1D
from unipor.model import ModelParams, UnsupportedModelError
from unipor.stepper import Mode, RunConfig, run_trajectory


@pytest.fixture(scope="module")
def bump_run():
    g = Grid1D(32)
    pr = ModelParams(p=2, lam=0.01, mu=1e-3)
    u0 = 1 + 2 * np.exp(-((g.centers - 0.5) / 0.08) ** 2)
    return run_trajectory(g, u0, pr, RunConfig(t_end=0.03, tau=1e-3))


@pytest.fixture(scope="module")
def weak_run():
    g = Grid1D(32)
    pr = ModelParams(p=2, alpha=0.5, lam=0.05, mu=1e-3)
    u0 = np.maximum(0.0, 1 - np.abs(g.centers - 0.5) / 0.3)
    return run_trajectory(g, u0, pr, RunConfig(t_end=0.05, tau=1e-3, mode=Mode.WEAK, weak_shift=1e-2))


def test_report_line_format():
    rep = dg.CheckReport("x", True, 0.5, None, 1.0)
    assert rep.line() == "x PASS 0.5 1"
    assert dg._report("y", 2.0, None, 1.0).line() == "y FAIL 2 1"


def test_all_trajectory_checks_pass_on_bump(bump_run):
    for rep in dg.run_all_checks(bump_run, dg.TRAJECTORY_CHECKS):
        assert rep.passed, rep.line()


def test_sandwich_brackets_and_preconditions(bump_run):
    rep = dg.check_sandwich(bump_run)
    assert rep.passed and rep.details["lower_margin"] >= 0 and rep.details["upper_margin"] >= 0
    # a looser bracket still holds
    assert dg.check_sandwich(bump_run, delta=0.5, M=4.0).passed
    with pytest.raises(ValueError):
        dg.check_sandwich(bump_run, delta=1.5)
    with pytest.raises(ValueError):
        dg.check_sandwich(bump_run, M=2.0)
    with pytest.raises(ValueError):
        dg.check_sandwich(bump_run, delta=0.0)


def test_sandwich_detects_violation(bump_run):
    bad = replace(bump_run, sup_norms=bump_run.sup_norms + 1.0)
    rep = dg.check_sandwich(bad)
    assert not rep.passed and rep.worst_violation == pytest.approx(1.0, rel=1e-6)


def test_unidirectional_detects_decrease(bump_run):
    assert dg.check_unidirectional(bump_run).worst_violation == 0.0
    f = bump_run.fields.copy()
    f[5, 3] -= 1.0
    rep = dg.check_unidirectional(replace(bump_run, fields=f))
    assert not rep.passed and rep.location == (5, 3)


def test_xi_law_and_monotone_detect_tampering(bump_run):
    assert dg.check_xi_law(bump_run).passed
    xi = bump_run.xi.copy()
    xi[4, 16] += 0.5
    assert not dg.check_xi_law(replace(bump_run, xi=xi)).passed
    norms = dict(bump_run.xi_norms)
    arr = norms[math.inf].copy()
    arr[3] = arr[2] + 0.1
    norms[math.inf] = arr
    rep = dg.check_xi_monotone(replace(bump_run, xi_norms=norms))
    assert not rep.passed and rep.location[0] == 3


def test_xi_monotone_holds_for_q2(bump_run):
    assert dg.check_xi_monotone(bump_run, 2.0).passed


def test_weak_checks_on_shifted_data(weak_run):
    S, mag = dg.weak_energy_slack(weak_run)
    assert S[0] == 0.0 and mag > 0
    assert dg.check_weak_energy(weak_run).passed
    rep = dg.check_weak_variational(weak_run)
    assert rep.passed and len(rep.details["values"]) == 7


def test_weak_variational_zero_test_function(weak_run):
    zero = np.zeros_like(weak_run.fields)
    assert dg.weak_variational_value(weak_run, zero) == (0.0, 0.0)
    rep = dg.check_weak_variational(weak_run, test_functions=[lambda t, x: 0.0])
    assert rep.passed and rep.worst_violation == 0.0


def test_weak_variational_rejects_bad_test_functions(weak_run):
    T = weak_run.times[-1]
    with pytest.raises(ValueError, match="non-negative"):
        dg.check_weak_variational(weak_run, test_functions=[lambda t, x: (t - T) * np.ones_like(x)])
    with pytest.raises(ValueError, match="vanish"):
        dg.check_weak_variational(weak_run, test_functions=[lambda t, x: 1.0 + 0 * x])
    with pytest.raises(ValueError, match="shape"):
        dg.check_weak_variational(weak_run, test_functions=[np.zeros((2, 2))])


def test_weak_checks_need_every_step():
    g = Grid1D(8)
    tr = run_trajectory(g, np.ones(8), ModelParams(p=2, mu=0.1), RunConfig(t_end=0.01, tau=1e-3,
                                                                             record_every=2))
    with pytest.raises(ValueError):
        dg.check_weak_energy(tr)


def test_weak_energy_unsupported_for_alpha_two():
    g = Grid1D(4)
    tr = run_trajectory(g, np.ones(4), ModelParams(p=3, alpha=2, mu=0.1), RunConfig(t_end=0.005, tau=1e-3))
    with pytest.raises(UnsupportedModelError):
        dg.check_weak_energy(tr)


def test_comparison_identical_data():
    g = Grid1D(16)
    u = 1 + np.exp(-((g.centers - 0.5) / 0.1) ** 2)
    rep = dg.check_comparison_coupled(g, u, u, ModelParams(p=2, lam=0.1, mu=1e-2), RunConfig(t_end=0.02, tau=1e-3))
    assert rep.passed and rep.details["min_gap"] == 0.0


def test_comparison_constants_stay_strictly_ordered():
    g = Grid1D(8)
    rep = dg.check_comparison_coupled(g, np.ones(8), np.full(8, 2.0), ModelParams(p=3, mu=1e-2),
                                      RunConfig(t_end=0.05, tau=1e-3))
    assert rep.passed and rep.details["repairs"] == 0 and rep.details["min_gap"] >= 1.0


def test_comparison_random_ordered_bumps():
    rng = np.random.default_rng(7)
    g = Grid1D(24)
    x = g.centers
    pr = ModelParams(p=2.5, alpha=0.5, lam=0.05, mu=1e-2)
    for _ in range(3):
        low = 1 + rng.uniform(0, 1) * np.exp(-((x - rng.uniform(0.2, 0.8)) / 0.1) ** 2)
        high = low + rng.uniform(0, 0.5, x.size) * (rng.uniform(size=x.size) < 0.5)
        rep = dg.check_comparison_coupled(g, low, high, pr, RunConfig(t_end=0.02, tau=1e-3))
        assert rep.passed, rep.line()


def test_comparison_rejects_unordered_data():
    g = Grid1D(2)
    with pytest.raises(ValueError):
        dg.check_comparison_coupled(g, np.array([2.0, 1.0]), np.array([1.0, 2.0]), ModelParams(p=2, mu=0.1),
                                    RunConfig(t_end=0.01))


def test_unknown_check_name(bump_run):
    with pytest.raises(KeyError):
        dg.run_all_checks(bump_run, ["nope"])

import numpy as np
import pytest

from heatctl.assembly import ProblemSpec, zero_datum
from heatctl.forward import final_norm, solve_forward

T = 0.5
K = 0.1 * np.pi**2


def test_uncontrolled_decay():
    run = solve_forward(ProblemSpec(), None, Nx_f=40, Nt_f=200)
    exact = np.exp(-K * T) / np.sqrt(2)
    assert exact == pytest.approx(0.43169, abs=1e-5)
    assert final_norm(run) == pytest.approx(exact, rel=1e-5)


def test_zero_datum_and_zero_control_stay_zero():
    run = solve_forward(ProblemSpec(y0=zero_datum), lambda x, t: np.zeros_like(x), Nx_f=8, Nt_f=10)
    assert not np.any(run.trajectory)


def test_two_mode_datum_matches_separated_solution():
    y0 = lambda x: np.sin(np.pi * x) + 0.5 * np.sin(2 * np.pi * x)
    run = solve_forward(ProblemSpec(y0=y0), None, Nx_f=32, Nt_f=400)
    x = np.linspace(0, 1, 17)
    exact = np.exp(-K * T) * np.sin(np.pi * x) + 0.5 * np.exp(-4 * K * T) * np.sin(2 * np.pi * x)
    np.testing.assert_allclose(run.sample(x), exact, atol=1e-5)
    np.testing.assert_allclose(run.sample(x, 0), y0(x), atol=1e-6)


def test_second_order_in_time():
    exact = np.exp(-K * T) / np.sqrt(2)
    errs = [abs(final_norm(solve_forward(ProblemSpec(), None, Nx_f=32, Nt_f=n)) - exact) for n in (10, 20, 40)]
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all(ratios < 0.3) and np.all(ratios > 0.2)


def test_constant_source_steady_state():
    # y0 = 0, v = 1 on the whole interval, long horizon: y -> x(1-x)/(2c)
    spec = ProblemSpec(y0=zero_datum, omega=(0.0, 1.0), T=20.0)
    run = solve_forward(spec, lambda x, t: np.ones_like(x), Nx_f=16, Nt_f=400)
    x = np.linspace(0, 1, 9)
    np.testing.assert_allclose(run.sample(x), x * (1 - x) / 0.2, atol=1e-4)


def test_linear_in_datum_and_control():
    v = lambda x, t: np.cos(3 * x) * t
    spec = ProblemSpec()
    a = solve_forward(spec, v, Nx_f=16, Nt_f=20).final
    b = solve_forward(spec, None, Nx_f=16, Nt_f=20).final
    c = solve_forward(spec.with_(y0=zero_datum), v, Nx_f=16, Nt_f=20).final
    np.testing.assert_allclose(a, b + c, atol=1e-13)


def test_control_acts_only_in_omega():
    spec = ProblemSpec(y0=zero_datum)
    run = solve_forward(spec, lambda x, t: np.ones_like(x), Nx_f=20, Nt_f=20)
    other = solve_forward(spec, lambda x, t: np.where((x > 0.2) & (x < 0.5), 1.0, 5.0), Nx_f=20, Nt_f=20)
    np.testing.assert_allclose(run.final, other.final, atol=1e-13)


def test_bad_control_type():
    with pytest.raises(TypeError):
        solve_forward(ProblemSpec(), 3.0, Nx_f=4, Nt_f=2)

import csv

import numpy as np
import pytest

from borel_ref import forced_mode
from borelbouss.borel_solver import BorelSolution, PGrid, march
from borelbouss.laplace_eval import (
    OutsideValidityError,
    eval_time,
    physical_header,
    spectral_header,
    tail_bound,
    to_physical,
    write_physical_csv,
    write_spectral_csv,
)
from borelbouss.spectral_field import Lattice, SpectralState
from conftest import nonlinear_case

OMEGA_LIN = 5.86


class TestEvalTime:
    def test_zero_solution(self):
        initial, f, pp = nonlinear_case()
        lat = initial.lattice
        sol = BorelSolution(PGrid(0.01, 100), np.zeros((101, 3) + lat.shape, complex), pp, initial, f)
        for t in (0.01, 0.1):
            np.testing.assert_array_equal(eval_time(sol, t, 1.0).state.pair, initial.pair)

    def test_linear_closed_form(self, linear_solution):
        idx = (1,) + linear_solution.lattice.index((1, 0))
        val = eval_time(linear_solution, 0.1, OMEGA_LIN).state.pair[idx]
        exact = forced_mode(0.1, 0.5, 1.0)
        assert abs(val - exact) / exact <= 1e-5

    def test_small_t_watson(self):
        # e^{-p/t} must be resolved, so the grid is much finer than t
        initial, f, pp = nonlinear_case()
        sol = march(initial, f, pp, PGrid.from_horizon(2e-5, 0.03))
        x0, x1 = sol.initial.pair, sol.data[0]
        gaps = []
        for t in (1e-3, 5e-4):
            u = eval_time(sol, t, 6.93).state.pair
            gaps.append(np.abs((u - x0) / t - x1).max())
        assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.05)

    def test_outside_validity(self, linear_solution):
        with pytest.raises(OutsideValidityError):
            eval_time(linear_solution, 2 / OMEGA_LIN, OMEGA_LIN)
        with pytest.raises(OutsideValidityError):
            eval_time(linear_solution, -0.1, OMEGA_LIN)
        with pytest.raises(OutsideValidityError):
            eval_time(linear_solution, 1 / OMEGA_LIN, OMEGA_LIN)

    def test_cauchy_circle(self, linear_solution):
        idx = (1,) + linear_solution.lattice.index((1, 0))
        t0, rho, n = 0.08, 0.02, 64
        ts = t0 + rho * np.exp(2j * np.pi * np.arange(n) / n)
        assert np.min((1 / ts).real) > OMEGA_LIN
        vals = [eval_time(linear_solution, complex(t), OMEGA_LIN).state.pair[idx] for t in ts]
        center = eval_time(linear_solution, t0, OMEGA_LIN).state.pair[idx]
        assert abs(np.mean(vals) - center) <= 1e-6
        assert center == pytest.approx(forced_mode(t0, 0.5, 1.0), rel=1e-6)

    def test_tail_monotone_in_P(self, nonlinear_solution):
        sol = nonlinear_solution
        tails = [tail_bound(sol.truncate(n), 0.1, 6.93) for n in (500, 1000, 1500, 2000)]
        assert all(b <= a for a, b in zip(tails, tails[1:]))
        assert all(t >= 0 for t in tails)

    def test_second_order_in_dp(self):
        initial, f, pp = nonlinear_case(A=0.3)
        vals = []
        for dp in (4e-3, 2e-3, 1e-3):
            sol = march(initial, f, pp, PGrid.from_horizon(dp, 1.6))
            vals.append(eval_time(sol, 0.1, 8.0).state.pair)
        d1 = np.abs(vals[0] - vals[1]).max()
        d2 = np.abs(vals[1] - vals[2]).max()
        assert d1 / d2 > 3.0


class TestPhysical:
    def test_cosine(self):
        lat = Lattice(2, 2)
        s = SpectralState.from_modes(lat, [((1, 0), (0, 0), 0.5)])
        ps = to_physical(s, 8)
        X = ps.x[:, None] * np.ones(8)[None, :]
        np.testing.assert_allclose(ps.theta, np.cos(X), atol=1e-14)
        assert not np.any(ps.u)

    def test_zero(self):
        ps = to_physical(SpectralState.zeros(Lattice(2, 1)), 5)
        assert not np.any(ps.u) and not np.any(ps.theta)

    def test_parseval(self, nonlinear_solution):
        s = nonlinear_solution.state(700)
        n = 2 * s.lattice.K + 1
        ps = to_physical(s, n)
        lhs = (np.sum(ps.u**2) + np.sum(ps.theta**2)) / n**2
        rhs = np.sum(np.abs(s.pair) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-10)

    def test_nonsymmetric_rejected(self):
        lat = Lattice(2, 1)
        s = SpectralState.from_modes(lat, [((1, 0), (0, 0), 1.0)], symmetrize=False)
        with pytest.raises(ValueError):
            to_physical(s, 4)


def read_rows(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    return lines[:2], list(csv.reader(lines[2:]))


class TestCSV:
    def test_spectral(self, tmp_path, linear_solution):
        rows = [(0.1, eval_time(linear_solution, 0.1, OMEGA_LIN)), (0.5, None)]
        path = tmp_path / "s.csv"
        write_spectral_csv(path, rows, linear_solution.lattice, "cafe")
        pre, body = read_rows(path)
        assert pre == ["# format_version=1", "# config_hash=cafe"]
        assert body[0] == spectral_header(2)
        assert len(body) == 1 + 25 + 1
        assert body[-1][:2] == ["0.5", "0"] and all(v == "" for v in body[-1][2:])
        row = next(r for r in body[1:] if r[3:5] == ["1", "0"])
        assert float(row[7]) == pytest.approx(forced_mode(0.1, 0.5, 1.0), rel=1e-5)

    def test_empty(self, tmp_path):
        path = tmp_path / "e.csv"
        write_spectral_csv(path, [], Lattice(2, 1), "x")
        _, body = read_rows(path)
        assert body == [spectral_header(2)]

    def test_physical_all_flagged(self, tmp_path):
        path = tmp_path / "f.csv"
        write_physical_csv(path, [(0.3, None)], 4, "x", d=3)
        _, body = read_rows(path)
        assert body[0] == physical_header(3)
        assert body[1][:2] == ["0.3", "0"] and len(body[1]) == len(body[0])

    def test_physical(self, tmp_path, linear_solution):
        rows = [(0.1, eval_time(linear_solution, 0.1, OMEGA_LIN))]
        path = tmp_path / "p.csv"
        write_physical_csv(path, rows, 4, "x")
        _, body = read_rows(path)
        assert body[0] == physical_header(2)
        assert len(body) == 1 + 16
        u2 = np.array([float(r[5]) for r in body[1:]])
        x = np.array([float(r[2]) for r in body[1:]])
        np.testing.assert_allclose(u2, 2 * forced_mode(0.1, 0.5, 1.0) * np.cos(x), rtol=1e-5, atol=1e-12)

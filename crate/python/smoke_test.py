"""Smoke test for the gpcg extension module."""
import math
import os
import tempfile

import gpcg


def harmonic_1d():
    grid = gpcg.Grid(1, 16.0, 128)
    model = gpcg.Model(grid, eta=0.0)
    phi0 = model.initial_guess("a")
    sol = gpcg.solve(model, phi0, method="pcg", precond="sym", tol=1e-14)
    assert sol.status in ("converged", "stalled"), sol
    assert abs(sol.energy - math.sqrt(2) / 2) < 1e-10, sol.energy
    assert abs(sol.phi.norm() - 1.0) < 1e-12
    assert all(b <= a + 1e-12 for a, b in zip(sol.energies, sol.energies[1:]))
    print("harmonic 1d:", sol)


def rotating_2d():
    grid = gpcg.Grid(2, 8.0, 32)
    model = gpcg.Model(grid, eta=100.0, omega=0.5)
    phi0 = model.initial_guess("tf")
    pg = gpcg.solve(model, phi0, method="pg", precond="sym", tol=1e-10)
    pcg = gpcg.solve(model, phi0, method="pcg", precond="sym", tol=1e-10)
    assert abs(pg.energy - pcg.energy) < 1e-6, (pg, pcg)
    _, r = model.residual(pcg.phi)
    assert r < 1e-3, r
    print("rotating 2d:", pcg, "vortices:", len(gpcg.detect_vortices(pcg.phi, 4.0)))


def config_run():
    with tempfile.TemporaryDirectory() as out:
        text = f"""
out = "{out}"
[grid]
dim = 1
half_width = 8.0
points = 64
[model]
eta = 10.0
"""
        sol = gpcg.run_config(text, [("solver.precond", "kinetic")])
        assert sol.status == "converged", sol
        for name in ("convergence.csv", "summary.toml", "field.gpef"):
            assert os.path.exists(os.path.join(out, name)), name
        print("config run:", sol)


def bad_input():
    try:
        gpcg.Grid(1, 8.0, 7)
    except ValueError as e:
        print("rejected odd grid:", e)
    else:
        raise AssertionError("odd grid accepted")


if __name__ == "__main__":
    harmonic_1d()
    rotating_2d()
    config_run()
    bad_input()
    print("ok")

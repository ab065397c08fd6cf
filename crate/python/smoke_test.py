"""Smoke test for the weakkam extension module.

Build it first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import tempfile
from pathlib import Path

import weakkam

PENDULUM = json.dumps({"family": "mechanical", "potential": {"cos_coeffs": [[1, 1.0]]}})


def main():
    lag = weakkam.Lagrangian(PENDULUM)
    assert lag.family == "mechanical"
    assert abs(lag([0.0], [0.0]) + 1.0) < 1e-12
    assert abs(lag.hamiltonian([0.0], [0.0]) - 1.0) < 1e-9

    sol = weakkam.solve_cell(lag, 1, 128)
    assert abs(sol.hbar - 1.0) < 0.05, sol
    phi = sol.phi
    assert phi.n == 128 and len(phi) == 128 and min(phi.values) == 0.0
    back = weakkam.GridField.from_csv(phi.to_csv())
    assert back.values == phi.values

    value, b, p = weakkam.lower_envelope_at(phi, 0.1, [0.3])
    assert value <= phi.interpolate([0.3]) + 1e-12
    assert abs(p[0] + b[0] / 0.01) < 1e-9
    up, _, _ = weakkam.upper_envelope_at(phi, 0.1, [0.3])
    assert up >= phi.interpolate([0.3]) - 1e-12

    proc = weakkam.aim(phi, lag, [0.5], 2.0)
    assert len(proc) > 0 and abs(proc.duration - 2.0) < 1e-12
    assert len(proc.positions) == len(proc) + 1

    lp = weakkam.mather_lp(lag, 1, 32, 4, velocity_samples=64)
    assert abs(lp + 1.0) < 0.05, lp

    config = json.dumps({"kind": "cell", "lagrangian": json.loads(PENDULUM), "grid": {"d": 1, "n": 64}})
    with tempfile.TemporaryDirectory() as tmp:
        report = weakkam.run_experiment(config, tmp)
        assert report["passed"], report
        assert (Path(tmp) / "cell_phi.csv").is_file()

    try:
        weakkam.GridField(1, 12, [0.0] * 12)
    except ValueError:
        pass
    else:
        raise AssertionError("grid size 12 accepted")

    print(f"ok: hbar={sol.hbar:.6f} lp={lp:.6f} aim_avg={proc.cost / proc.duration:.4f}")


if __name__ == "__main__":
    main()

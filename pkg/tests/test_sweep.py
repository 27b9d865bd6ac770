import csv
import io
import math

import numpy as np
import pytest

from conftest import FAST
from heralded_cz.config import load_config
from heralded_cz.errors import ConfigError, FitError
from heralded_cz.sweep import (
    FLOOR,
    METRICS,
    SweepAxis,
    SweepSpec,
    fit_loglog,
    fit_scaling,
    run_sweep,
)


@pytest.fixture(scope="module")
def rabi_table():
    base = load_config("fig4").system
    spec = SweepSpec(base, (SweepAxis("rabi_scale", -0.004, 0.004, 5),), "calibrated", True, FAST)
    return run_sweep(spec)


class TestAxis:
    def test_linear_values(self):
        assert np.allclose(SweepAxis("rabi_scale", -1, 1, 5).values(), [-1, -0.5, 0, 0.5, 1])

    def test_log_values(self):
        assert np.allclose(SweepAxis("rabi_scale", 1e-4, 1e-2, 3, "log").values(), [1e-4, 1e-3, 1e-2])

    @pytest.mark.parametrize(
        "kw",
        [
            dict(kind="rabi_scale", min=0, max=1, points=1),
            dict(kind="rabi_scale", min=1, max=0, points=3),
            dict(kind="rabi_scale", min=-1, max=1, points=3, spacing="log"),
            dict(kind="temperature", min=0, max=1, points=3),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            SweepAxis(**kw)

    def test_blockade_mapping(self, fig2):
        base = fig2.system
        p = SweepAxis("blockade_b1", 1.0, 2.0, 2).perturbation(1.5, base)
        assert p.magnitude == (base.B0, 1.5)
        assert SweepAxis("blockade", 1.0, 2.0, 2).perturbation(1.5, base).magnitude == (1.5, 1.5)

    def test_names(self):
        assert SweepAxis("detuning_offset", -1, 1, 3, target="buffer").name == "detuning_offset_buffer"
        assert SweepAxis("rabi_scale", -1, 1, 3).name == "rabi_scale"


class TestSpec:
    def test_two_axes_grid(self, fig4):
        spec = SweepSpec(
            fig4.system,
            (SweepAxis("rabi_scale", -1e-3, 1e-3, 3), SweepAxis("detuning_offset", -0.1, 0.1, 2, target="buffer")),
        )
        assert len(spec.grid()) == 6

    def test_duplicate_axes(self, fig4):
        ax = SweepAxis("rabi_scale", -1e-3, 1e-3, 3)
        with pytest.raises(ConfigError):
            SweepSpec(fig4.system, (ax, ax))

    def test_bad_eta_mode(self, fig4):
        with pytest.raises(ConfigError):
            SweepSpec(fig4.system, (SweepAxis("rabi_scale", -1, 1, 2),), eta="best")


class TestRun:
    def test_columns(self, rabi_table):
        assert rabi_table.columns[0] == "rabi_scale"
        assert all(m in rabi_table.columns for m in METRICS)
        assert len(rabi_table) == 5

    def test_heralding_helps_everywhere(self, rabi_table):
        assert np.all(rabi_table.column("err_herald") <= rabi_table.column("err_raw") + FLOOR)

    def test_eta_held_fixed(self, rabi_table):
        eta = rabi_table.column("eta")
        assert np.all(eta == eta[0])

    def test_floor_flag(self, rabi_table):
        centre = rabi_table.rows[2]
        assert centre["err_herald"] >= FLOOR
        if centre["err_herald_floored"]:
            assert centre["err_herald"] == FLOOR

    def test_csv_roundtrip(self, rabi_table):
        rows = list(csv.reader(io.StringIO(rabi_table.to_csv())))
        assert rows[0] == rabi_table.columns
        assert float(rows[4][0]) == pytest.approx(0.002)
        assert rows[1][-1] == ""

    def test_csv_deterministic(self, rabi_table, fig4):
        spec = SweepSpec(fig4.system, (SweepAxis("rabi_scale", -0.004, 0.004, 5),), "calibrated", True, FAST)
        assert run_sweep(spec).to_csv() == rabi_table.to_csv()

    def test_failed_point_recorded(self, fig4):
        # a blockade axis is meaningless on the all-blockade layout; each point records the error
        spec = SweepSpec(fig4.system, (SweepAxis("blockade", 10.0, 20.0, 2),), 0.0, False, FAST)
        table = run_sweep(spec)
        assert all("ConfigError" in r["error"] for r in table.rows)
        assert np.all(np.isnan(table.column("F_raw")))

    def test_parallel_matches_serial(self, fig4):
        ax = SweepAxis("rabi_scale", -0.002, 0.002, 3)
        serial = run_sweep(SweepSpec(fig4.system, (ax,), 0.1, False, FAST, workers=1))
        parallel = run_sweep(SweepSpec(fig4.system, (ax,), 0.1, False, FAST, workers=2))
        assert serial.to_csv() == parallel.to_csv()


class TestFit:
    def test_exact_power_law(self):
        x = np.logspace(-4, -2, 6)
        fit = fit_loglog(x, 3 * x**2)
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(math.log(3))
        assert fit.r2 == pytest.approx(1.0)

    def test_symmetric_axis_uses_magnitude(self):
        x = np.linspace(-1, 1, 9)
        fit = fit_loglog(x, x**2)
        assert fit.slope == pytest.approx(2.0)
        assert fit.n == 8

    def test_too_few_points(self):
        with pytest.raises(FitError):
            fit_loglog([1, 2, 3], [1, 4, 9])

    def test_table_fit_drops_floored(self, rabi_table):
        fit = fit_scaling(rabi_table, "err_raw", "rabi_scale")
        assert fit.n <= 4
        assert 1.5 < fit.slope < 2.5

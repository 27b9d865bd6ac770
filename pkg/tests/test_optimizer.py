import math

import numpy as np
import pytest

from heralded_cz import optimizer
from heralded_cz.errors import IntegrationError
from heralded_cz.gate import CZ_DIAG, local_phases
from heralded_cz.optimizer import (
    FAILURE_PENALTY,
    INIT_PEAK_RABI,
    CostSpec,
    cost,
    gate_fidelity,
    join,
    optimize,
    random_start,
    split,
    with_coeffs,
)
from heralded_cz.propagator import IntegratorSettings
from heralded_cz.waveform import FourierWaveform

CHEAP = IntegratorSettings("magnus4", steps=200)


@pytest.fixture
def spec(fig2):
    base = fig2.system.replace(B0=math.inf, B1=math.inf)
    return CostSpec(base=base, n_harmonics=2, settings=CHEAP)


def fig2_start(system, n):
    return {
        "buffer_rabi": list(system.buffer_pulse.rabi.coeffs[: n + 1]),
        "buffer_detuning": list(system.buffer_pulse.detuning.coeffs[: n + 1]),
        "qubit_rabi": list(system.qubit_pulse.rabi.coeffs[: n + 1]),
    }


class TestPacking:
    def test_roundtrip(self):
        x = np.arange(9.0)
        parts = split(x, 2)
        assert parts["buffer_detuning"] == [3.0, 4.0, 5.0]
        assert np.array_equal(join(parts), x)

    def test_with_coeffs_keeps_qubit_detuning_zero(self, spec):
        cfg = with_coeffs(spec.base, split(np.ones(9), 2))
        assert cfg.qubit_pulse.detuning.is_zero
        assert cfg.buffer_pulse.rabi.coeffs == (1.0, 1.0, 1.0)


class TestFidelityModes:
    def test_flips(self):
        m = -CZ_DIAG * np.array([1, -1, -1, 1])
        assert gate_fidelity(m, "flips") == pytest.approx(1.0)
        assert gate_fidelity(m, "none") < 0.5

    def test_continuous(self):
        m = local_phases(0.2, 0.7, -0.4) * CZ_DIAG
        assert gate_fidelity(m, "continuous") == pytest.approx(1.0, abs=1e-10)
        assert gate_fidelity(m, "flips") < 1.0


class TestCost:
    def test_non_negative(self, spec, rng):
        for _ in range(3):
            assert cost(random_start(spec, rng), spec) >= 0

    def test_size_check(self, spec):
        with pytest.raises(ValueError, match="coefficients"):
            cost(np.zeros(4), spec)

    def test_full_fig2_is_near_cz(self, fig2):
        base = fig2.system.replace(B0=math.inf, B1=math.inf)
        s = CostSpec(base=base, settings=IntegratorSettings("magnus4", steps=1000))
        assert cost(fig2_start(base, 8), s) < 1e-3

    def test_power_penalty(self, spec):
        x = join(fig2_start(spec.base, 2))
        capped = CostSpec(base=spec.base, n_harmonics=2, settings=CHEAP, w_power=1.0, power_cap=1.0)
        assert cost(x, capped) > cost(x, spec) + 100

    def test_integration_failure_penalized(self, spec, monkeypatch):
        def boom(*a, **k):
            raise IntegrationError("blew up", 0.0)

        monkeypatch.setattr(optimizer, "rail_amplitudes", boom)
        assert cost(np.zeros(spec.size), spec) == FAILURE_PENALTY

    @pytest.mark.parametrize("kw", [{"n_harmonics": 0}, {"w_fid": 0.0}, {"bounds": (1.0, -1.0)}, {"compensation": "x"}])
    def test_invalid_spec(self, spec, kw):
        with pytest.raises(ValueError):
            CostSpec(base=spec.base, **kw)


class TestSearch:
    def test_budget_respected(self, spec):
        res = optimize(spec, seed=1, max_evals=60, restart_evals=25)
        assert res.evaluations <= 60
        assert res.restarts >= 2

    def test_history_monotone(self, spec):
        res = optimize(spec, seed=2, max_evals=80)
        costs = [c for _, c in res.history]
        assert costs == sorted(costs, reverse=True)
        assert res.cost == costs[-1]

    def test_deterministic(self, spec):
        a = optimize(spec, seed=7, max_evals=60, restart_evals=30)
        b = optimize(spec, seed=7, max_evals=60, restart_evals=30)
        assert a.coeffs == b.coeffs and a.history == b.history

    def test_warm_start_improves(self, spec):
        init = fig2_start(spec.base, 2)
        res = optimize(spec, seed=0, max_evals=150, initial=init)
        assert res.cost <= cost(init, spec)

    def test_target_stops_early(self, spec):
        res = optimize(spec, seed=0, max_evals=500, target=math.inf)
        assert res.evaluations == 1

    def test_random_start_peak(self, spec, rng):
        parts = split(random_start(spec, rng), spec.n_harmonics)
        for name in ("buffer_rabi", "qubit_rabi"):
            assert FourierWaveform(tuple(parts[name])).peak() <= INIT_PEAK_RABI * (1 + 1e-9)

    def test_bad_budget(self, spec):
        with pytest.raises(ValueError):
            optimize(spec, max_evals=0)

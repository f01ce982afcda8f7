"""Acceptance suite: one test per release criterion.

Each test pins the tolerance it must meet and prints a PASS line with
the measured figure, so a plain ``pytest tests/test_acceptance.py -s``
reads as a checklist.  Dataset-scale figures (20,000 training points,
2,044 polling iterations, 10 trials) match the reference experiment
sizes.
"""

import json
import math
import time

import mpmath
import numpy as np
import pytest

from pneusim import bus as bus_mod
from pneusim import control, dynamics as dyn, sysid
from pneusim.cli import main as cli_main
from pneusim.protocol import Packet, decode_stream, encode_packet, packet_time


def ok(line):
    print(f"PASS: {line}")


class TestProtocolRoundTrip:
    def test_round_trip_10k_random_and_corner_exhaustive(self, rng):
        t0 = time.perf_counter()
        for _ in range(10_000):
            addr = int(rng.integers(0xFFFC, 0x10000))
            payload = tuple(int(w) for w in rng.integers(0, 1024, 4))
            pkt = Packet(addr, payload)
            assert decode_stream(encode_packet(pkt), addr, [0]) == pkt

        corners = (0, 1, 1022, 1023)
        count = 0
        for addr in (0xFFFF, 0xFFFE, 0xFFFD, 0xFFFC):
            for a in corners:
                for b in corners:
                    for c in corners:
                        for d in corners:
                            pkt = Packet(addr, (a, b, c, d))
                            assert decode_stream(encode_packet(pkt), addr, [0]) == pkt
                            count += 1
        elapsed = time.perf_counter() - t0
        assert count == 4 * 4**4
        assert elapsed < 1.0
        ok(f"protocol round-trip: 10,000 random + {count} corner packets "
           f"in {elapsed:.2f}s (< 1s)")


class TestDelimiterSafety:
    def test_exhaustive_word_space(self):
        # aligned payload words can never alias an address word
        for word in range(1024):
            assert word < 0xFFFC
            assert (word >> 8) <= 0x03   # high byte bound
        # a misaligned pair straddling two payload words reads
        # (hi byte of word k) | (lo byte of word k+1) << 8
        worst = 0
        for hi in range(0x04):
            for lo in range(0x100):
                value = hi | (lo << 8)
                assert value < 0xFFFC
                worst = max(worst, value)
        assert worst == 0x03 + 0xFF * 256
        ok(f"delimiter safety: exhaustive over 1024 words; worst straddling "
           f"pair 0x{worst:04X} < 0xFFFC")


class TestTimingMath:
    def test_write_enable_and_tolerance_corner(self):
        t_nominal = bus_mod.write_enable_duration(976, 0.1)
        assert t_nominal == pytest.approx(107.36e-6, abs=0.01e-6)
        assert 102e-6 <= t_nominal <= 112e-6      # inside 107 +- 5 us
        t_corner = bus_mod.write_enable_duration(976 * 0.99, 0.1 * 0.95)
        assert t_corner > packet_time(1_000_000)
        ok(f"timing math: t_enable {t_nominal * 1e6:.2f} us "
           f"(107.36 +- 0.01), worst corner {t_corner * 1e6:.2f} us > 100 us")


class TestLoopRateReproduction:
    def test_calibrated_rows_predict_holdout_row(self):
        t0 = time.perf_counter()
        cfg = bus_mod.calibrate_timing(
            {n: bus_mod.MEASURED_LOOP_RATES_HZ[n] for n in (1, 2)})
        stats = [bus_mod.measure_loop_rate(n, 2044, config=cfg)
                 for n in (1, 2, 3)]
        elapsed = time.perf_counter() - t0

        predicted3 = stats[2].mean_hz
        rel_err = abs(predicted3 - 749.5) / 749.5
        assert rel_err < 0.20
        assert stats[0].mean_hz > stats[1].mean_hz > stats[2].mean_hz
        # monotone decrease holds for arbitrary nonnegative overheads too
        for other in (bus_mod.BusTimingConfig(),
                      bus_mod.BusTimingConfig(per_transaction_overhead_s=5e-4,
                                              per_loop_overhead_s=1e-3)):
            rates = [bus_mod.measure_loop_rate(n, 25, config=other).mean_hz
                     for n in (1, 2, 3)]
            assert rates[0] > rates[1] > rates[2]
        assert elapsed < 5.0
        ok(f"loop rates: calibrated on 1164.3/980.9 Hz rows, 3-device row "
           f"predicted {predicted3:.1f} Hz vs 749.5 measured "
           f"({rel_err * 100:.1f}% < 20%), 3x2044 sweeps in {elapsed:.2f}s")


class TestFlowFunction:
    def test_choked_ceiling_continuity_and_zero(self):
        # independent high-precision evaluation of the ceiling formula
        mpmath.mp.dps = 40
        g = mpmath.mpf("1.4")
        oracle = float((2 / (g + 1)) ** (1 / (g - 1)) * mpmath.sqrt(g / (g + 1)))
        got = dyn.psi_max(1.4)
        assert got == pytest.approx(oracle, abs=1e-4)
        assert got == pytest.approx(oracle, abs=1e-12)

        flow, gas = dyn.FlowConstants(), dyn.GasConstants()
        b = flow.b
        below = dyn.flow_function(1e5, b * 1e5 * (1 - 1e-12), flow, gas)
        above = dyn.flow_function(1e5, b * 1e5 * (1 + 1e-12), flow, gas)
        assert abs(below - above) < 1e-9
        assert dyn.flow_function(3e5, 3e5, flow, gas) == 0.0
        ok(f"flow function: ceiling {got:.6f} matches direct evaluation "
           f"{oracle:.6f} within 1e-4, continuous at b within 1e-9, "
           f"zero at equalization")


class TestGeometry:
    def test_thousand_random_joint_states(self):
        geom = dyn.JointGeometry()
        gen = np.random.default_rng(77)
        two_h_volume = 2 * math.pi * geom.delta**2 * geom.h
        h_fd = 1e-6
        worst_conserve = 0.0
        worst_grad = 0.0
        for _ in range(1000):
            q = gen.uniform(-2.5, 2.5, 2)
            q_dot = gen.uniform(-2.0, 2.0, 2)
            state = dyn.JointState(q, q_dot)
            v0, d0 = dyn.chamber_volumes(0, state, geom)
            v1, d1 = dyn.chamber_volumes(1, state, geom)
            worst_conserve = max(worst_conserve,
                                 abs(v0 + v1 - two_h_volume) / two_h_volume,
                                 abs(d0 + d1) / max(abs(d0), 1e-30))
            for i in range(4):
                _, analytic = dyn.chamber_volumes(i, state, geom)
                vp, _ = dyn.chamber_volumes(
                    i, dyn.JointState(q + h_fd * q_dot, q_dot), geom)
                vm, _ = dyn.chamber_volumes(
                    i, dyn.JointState(q - h_fd * q_dot, q_dot), geom)
                fd = (vp - vm) / (2 * h_fd)
                if fd != 0.0:
                    worst_grad = max(worst_grad, abs(analytic - fd) / abs(fd))
        assert worst_conserve < 1e-12
        assert worst_grad < 1e-6
        ok(f"geometry: 1000 random states, volume conservation to "
           f"{worst_conserve:.1e}, analytic vs finite-difference volume "
           f"rate to {worst_grad:.1e} (< 1e-6)")


class TestIntegrator:
    def test_exponential_oracle_and_convergence_order(self):
        alpha = 10.0
        model = dyn.LinearModel(dyn.LinearParams(alpha, alpha))
        p_cmd = 3e5
        t_end = 5.0 / alpha                      # five time constants

        def max_rel_err(dt):
            n = int(round(t_end / dt)) + 1
            inputs = [dyn.StepInputs(p_cmd=p_cmd) for _ in range(n)]
            got = dyn.integrate(model, 0.0, inputs, dt)
            exact = p_cmd * (1 - np.exp(-alpha * np.arange(n) * dt))
            return float(np.max(np.abs(got - exact)) / p_cmd)

        err_10ms = max_rel_err(0.01)
        assert err_10ms < 1e-3
        order = math.log2(max_rel_err(0.02) / err_10ms)
        assert order >= 3.5
        ok(f"integrator: max error {err_10ms * 100:.4f}% vs closed form at "
           f"dt=10ms (< 0.1%), observed order {order:.2f} (>= 3.5)")


class TestSysidOracleRecovery:
    def test_noiseless_and_noisy_recovery(self):
        t0 = time.perf_counter()
        linear_true = dyn.LinearParams(3.0, 3.2)
        nonlinear_true = dyn.bench_nonlinear_params()

        # noiseless
        ds_lin = sysid.oracle_dataset(linear_true, duration=220.0,
                                      with_joint_motion=False, seed=0)
        ds_non = sysid.oracle_dataset(nonlinear_true, duration=220.0, seed=0)
        # noisy: 1% of each signal's standard deviation, in kPa
        noise_lin = 0.01 * float(np.std(ds_lin.p[:, 0])) / 1e3
        noise_non = 0.01 * float(np.std(ds_non.p[:, 0])) / 1e3
        ds_lin_noisy = sysid.oracle_dataset(linear_true, duration=220.0,
                                            with_joint_motion=False,
                                            noise_kpa=noise_lin, seed=1)
        ds_non_noisy = sysid.oracle_dataset(nonlinear_true, duration=220.0,
                                            noise_kpa=noise_non, seed=1)

        r2_clean = {}
        for kind, ds in (("linear", ds_lin), ("nonlinear", ds_non)):
            train, val = sysid.split_dataset(ds, 20000)
            result = sysid.fit(kind, train, n_restarts=20, seed=0)
            predicted = sysid.predict_open_loop(result.params, val, 0)
            r2, _ = sysid.metrics(predicted, val.p[:, 0], val.dt)
            r2_clean[kind] = r2
            assert r2 > 0.99
            if kind == "linear":
                assert abs(result.params.alpha - 3.0) / 3.0 < 0.01
                assert abs(result.params.beta - 3.2) / 3.2 < 0.01
                alpha_err = abs(result.params.alpha - 3.0) / 3.0

        r2_noisy = {}
        for kind, ds in (("linear", ds_lin_noisy), ("nonlinear", ds_non_noisy)):
            train, val = sysid.split_dataset(ds, 20000)
            result = sysid.fit(kind, train, n_restarts=20, seed=0)
            predicted = sysid.predict_open_loop(result.params, val, 0)
            r2, _ = sysid.metrics(predicted, val.p[:, 0], val.dt)
            r2_noisy[kind] = r2
            assert r2 > 0.95

        elapsed = time.perf_counter() - t0
        assert elapsed < 120.0
        ok(f"sysid recovery: linear alpha/beta within "
           f"{alpha_err * 100:.3f}% (< 1%), validation R2 clean "
           f"lin {r2_clean['linear']:.4f} / nonlin {r2_clean['nonlinear']:.4f} "
           f"(> 0.99), noisy lin {r2_noisy['linear']:.4f} / nonlin "
           f"{r2_noisy['nonlinear']:.4f} (> 0.95), {elapsed:.0f}s < 120s")


class TestModelOrdering:
    def test_nonlinear_beats_linear_on_every_chamber(self, bench_dataset):
        train, val = sysid.split_dataset(bench_dataset, 20000)
        iae = {}
        for kind in ("linear", "nonlinear"):
            iae[kind] = []
            for chamber in range(4):
                result = sysid.fit(kind, train, chamber=chamber,
                                   n_restarts=20, seed=0)
                predicted = sysid.predict_open_loop(result.params, val, chamber)
                _, iae_val = sysid.metrics(predicted, val.p[:, chamber], val.dt)
                iae[kind].append(iae_val)
        for chamber in range(4):
            assert iae["nonlinear"][chamber] < iae["linear"][chamber]
        ok("model ordering: open-loop IAE nonlinear < linear on all 4 "
           f"chambers ({[f'{a:.0f}<{b:.0f}' for a, b in zip(iae['nonlinear'], iae['linear'])]})")

    def test_eval_cost_ordering_over_1e5_evaluations(self, bench_params):
        with open("tests/golden/parametric_fit.json") as fh:
            parametric = dyn.params_from_dict(json.load(fh)["params"])
        models = {
            "linear": dyn.LinearModel(dyn.LinearParams(3.0, 3.2)),
            "parametric": dyn.ParametricModel(parametric, 0,
                                              bench_params.geometry),
            "nonlinear": dyn.NonlinearModel(bench_params, 0),
        }
        inp = dyn.StepInputs(p_cmd=2.6e5, u=6.0,
                             state=dyn.JointState(np.array([0.1, 0.1]),
                                                  np.array([0.01, 0.01])))
        n = 100_000
        cost = {}
        for name, model in models.items():
            model.pdot(2.4e5, inp)
            t0 = time.perf_counter()
            for _ in range(n):
                model.pdot(2.4e5, inp)
            cost[name] = (time.perf_counter() - t0) / n * 1e6
        assert cost["linear"] < cost["parametric"] < cost["nonlinear"]
        ok(f"eval cost over {n} evaluations: linear {cost['linear']:.2f} us "
           f"< parametric {cost['parametric']:.2f} us "
           f"< nonlinear {cost['nonlinear']:.2f} us")


class TestClosedLoopStep:
    def test_step_settles_into_band_and_stays(self):
        device = control.make_bench_device()
        p0 = control.absolute_pa(50.0)
        p_cmd = control.absolute_pa(300.0)
        log, metrics_list = control.step_response(device, p0, p_cmd, 3.0)
        band = 0.05 * (p_cmd - p0)
        settle = []
        for i in range(4):
            m = metrics_list[i]
            assert np.isfinite(m.settling_time)
            after = log.p[np.nonzero(log.t >= m.settling_time)[0], i]
            assert np.all(np.abs(after - p_cmd) <= band)
            settle.append(m.settling_time)
        ok(f"closed-loop step 50->300 kPa: settles into +-5% band at "
           f"{max(settle):.2f}s and stays")

    def test_ten_trial_ci_is_zero_width_when_deterministic(self, tmp_path):
        out = tmp_path / "step"
        code = cli_main(["step", "--trials", "10", "--noise", "0",
                         "--out", str(out), "--seed", "0"])
        assert code == 0
        import csv as csv_mod

        with open(out / "step_response.csv") as fh:
            rows = list(csv_mod.DictReader(fh))
        max_width = max(
            float(r[f"p{i}_ci_hi_kpa"]) - float(r[f"p{i}_ci_lo_kpa"])
            for r in rows for i in range(4)
        )
        assert max_width == 0.0
        ok("step trials: 10-trial 95% confidence band has zero width in "
           "deterministic mode")


class TestCliDeterminism:
    @pytest.mark.parametrize("argv_factory", [
        lambda tmp, data: ["bus-bench", "--devices", "2", "--iterations", "40",
                           "--jitter", "2e-5", "--seed", "3"],
        lambda tmp, data: ["step", "--trials", "3", "--noise", "0.5",
                           "--seed", "5"],
        lambda tmp, data: ["make-dataset", "--seed", "4", "--config",
                           _write_cfg(tmp, {"duration_s": 2.0})],
        lambda tmp, data: ["fit", "--dataset", data, "--model", "linear",
                           "--restarts", "2", "--seed", "1", "--config",
                           _write_cfg(tmp, {"train_points": 400})],
        lambda tmp, data: ["compare", "--dataset", data, "--seed", "1",
                           "--config", _write_cfg(tmp, {
                               "train_points": 400, "restarts": 2,
                               "model_kinds": ["linear", "nonlinear"]})],
    ], ids=["bus-bench", "step", "make-dataset", "fit", "compare"])
    def test_identical_runs_are_byte_identical(self, tmp_path, argv_factory):
        data = tmp_path / "data.csv"
        device = control.make_bench_device(sensor_noise_kpa=0.3, seed=2)
        ref = sysid.step_reference(np.random.default_rng(0), 500, 100.0)
        control.track_trajectory(device, ref).to_csv(data)

        trees = []
        for name in ("run_a", "run_b"):
            out = tmp_path / name
            argv = argv_factory(tmp_path, str(data)) + ["--out", str(out)]
            assert cli_main(argv) == 0
            trees.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        assert trees[0] == trees[1]
        ok(f"determinism: {argv_factory(tmp_path, str(data))[0]} outputs "
           f"byte-identical across reruns")


def _write_cfg(tmp_path, doc):
    path = tmp_path / f"cfg_{abs(hash(json.dumps(doc, sort_keys=True)))}.json"
    path.write_text(json.dumps(doc))
    return str(path)

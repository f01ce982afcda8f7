import json

import numpy as np
import pytest

from pneuscript import DeviceUnreachableError, PressureController


def write_config(tmp_path, **overrides):
    doc = {"num_devices": 4, "model_kind": "linear", "seed": 0}
    doc.update(overrides)
    path = tmp_path / "bus.json"
    path.write_text(json.dumps(doc))
    return str(path)


class TestUsageListing:
    def test_reference_script_runs_green(self, tmp_path):
        # the documented usage example, with only the port string
        # adapted to the simulated transport
        uart_port = write_config(tmp_path)
        num_devices = 4
        my_controller = PressureController(uart_port, num_devices)

        # check communication with all expected devices
        my_controller.ping_devices()

        pressure_cmd = np.array([1, 2, 3, 4])
        for i in range(num_devices):
            my_controller.set_pressure_commands(i, pressure_cmd)
            data = my_controller.get_pressure_data(i)

        assert data.shape == (4,)
        assert np.all(data >= 0.0)

    def test_commands_converge_under_polling(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 1)
        target = np.array([1.0, 2.0, 3.0, 4.0])
        ctl.set_pressure_commands(0, target)
        first = ctl.get_pressure_data(0)
        for _ in range(800):
            data = ctl.get_pressure_data(0)
        # each poll advances simulated time, so the plant walks toward
        # the commanded pressures; one ADC count is 0.674 kPa
        assert np.linalg.norm(data - target) < np.linalg.norm(first - target)
        np.testing.assert_allclose(data, target, atol=0.7)


class TestPing:
    def test_missing_device_named_by_address(self, tmp_path):
        port = write_config(tmp_path, num_devices=3)
        ctl = PressureController(port, 4)
        with pytest.raises(DeviceUnreachableError, match="0xFFFC"):
            ctl.ping_devices()

    def test_all_present(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 4)
        ctl.ping_devices()  # no raise


class TestValidation:
    def test_zero_devices_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            PressureController(write_config(tmp_path), 0)

    def test_index_out_of_range(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 2)
        with pytest.raises(IndexError):
            ctl.get_pressure_data(2)
        with pytest.raises(IndexError):
            ctl.set_pressure_commands(-1, [0, 0, 0, 0])

    def test_wrong_command_count(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 1)
        with pytest.raises(ValueError):
            ctl.set_pressure_commands(0, [1, 2, 3])

    def test_real_serial_port_rejected(self, tmp_path):
        with pytest.raises(NotImplementedError):
            PressureController("/dev/null", 4)  # a character device

    def test_missing_config_path(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            PressureController(str(tmp_path / "nope.json"), 4)


class TestCommandClamping:
    def test_out_of_range_commands_clamp_to_sensor_range(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 1)
        ctl.set_pressure_commands(0, [-5.0, 800.0, 100.0, 100.0])
        device = ctl.transport.device(0xFFFF)
        gauge = (device.commands - 101325.0) / 1e3
        assert gauge[0] == pytest.approx(0.0, abs=1e-9)
        assert gauge[1] == pytest.approx(689.48, abs=1e-9)
        assert gauge[2] == pytest.approx(100.0, abs=0.4)


class TestTransactionAccounting:
    def test_each_call_is_exactly_one_transaction(self, tmp_path):
        ctl = PressureController(write_config(tmp_path), 4)
        bus = ctl.transport
        start = bus.transactions
        ctl.ping_devices()
        assert bus.transactions - start == 4
        ctl.set_pressure_commands(1, [10, 10, 10, 10])
        assert bus.transactions - start == 5
        ctl.get_pressure_data(1)
        assert bus.transactions - start == 6

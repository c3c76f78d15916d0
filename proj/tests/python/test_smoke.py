# Copyright 2026 The cashew-edge Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
import math

import numpy as np
import pytest

import cashew_edge as ce


def _images(n, size, seed):
    rng = np.random.default_rng(seed)
    return [rng.uniform(-1, 1, (size, size, 3)).astype(np.float32) for _ in range(n)]


def test_quant_params_and_rounding():
    p = ce.compute_quant_params(-1.0, 1.0)
    assert -128 <= p.zero_point <= 127
    assert abs(ce.dequantize_value(ce.quantize_value(0.3, p), p) - 0.3) <= p.scale / 2 + 1e-12
    s = ce.QuantParams(1.0, 0)
    assert ce.quantize_value(2.5, s) == 3
    assert ce.quantize_value(-2.5, s) == -3
    assert ce.quantize_value(1000.0, s) == 127
    mantissa, exponent = ce.to_fixed_point(0.75)
    assert 2**30 <= mantissa < 2**31
    assert math.ldexp(mantissa, exponent - 31) == 0.75
    with pytest.raises(ce.CashewError):
        ce.QuantParams(0.0, 0)


def test_build_execute_and_round_trip(tmp_path):
    model = ce.build_model(input_size=32, seed=1, class_labels=["anthracnose", "healthy"])
    assert model.mode == "float32"
    assert model.input_shape == [1, 32, 32, 3]
    probs = ce.execute(model, _images(1, 32, 0)[0])
    assert len(probs) == 2 and abs(sum(probs) - 1) < 1e-5
    path = tmp_path / "m.cshw"
    ce.save_model(model, path)
    assert ce.load_model(path) == model
    assert ce.deserialize_model(model.serialize()) == model
    with pytest.raises(ValueError):
        ce.execute(model, np.zeros((2, 32, 32, 3), np.float32))


def test_train_calibrate_quantize():
    model = ce.build_model(input_size=32, seed=2)
    imgs = _images(16, 32, 1)
    feats = ce.extract_features(model, imgs)
    assert feats.shape[0] == 16
    labels = [i % 2 for i in range(16)]
    cfg = ce.TrainConfig()
    cfg.total_steps = 20
    trained, report = ce.train_head(model, feats, labels, cfg)
    assert len(report.loss) == 20
    assert report.lr[0] == pytest.approx(cfg.lr_max / cfg.div_factor)
    stats = ce.calibrate(trained, imgs)
    assert ce.CalibrationStats.from_text(stats.to_text()).ranges == stats.ranges
    q = ce.quantize_model(trained, stats)
    assert q.mode == "int8"
    assert q.file_size() <= 0.40 * trained.file_size()
    assert q.arena_bytes() < trained.arena_bytes()
    assert len(ce.predict(q, imgs)) == 16


def test_schedule_and_clip():
    cfg = ce.TrainConfig()
    assert ce.one_cycle_lr(0, cfg) == cfg.lr_max / cfg.div_factor
    grads, norm = ce.clip_gradients([3.0, 4.0], 1.0)
    assert norm == 5.0
    assert grads == pytest.approx([0.6, 0.8])


def test_spray_plan():
    sw = (11.5, 79.4)
    ne = (11.5 + 20 / 110540.0, 79.4 + 0.00015)
    lon_m = 1 / (111320.0 * math.cos(math.radians(sw[0])))
    dets = [(sw[0] + 5 / 110540.0, sw[1] + 5 * lon_m, "anthracnose"),
            (sw[0] + 5 / 110540.0, sw[1] + 5 * lon_m, "healthy"),
            (sw[0] + 15 / 110540.0, sw[1] + 5 * lon_m, "healthy")]
    plan = ce.plan_spray(dets, sw, ne, cell_size_m=10.0)
    assert plan["rows"] == 2
    assert plan["severity"][0] == 0.5
    assert plan["dosage"][0] == pytest.approx(ce.dosage_for(0.5, ce.SprayPolicy()))
    assert plan["variable_liters"] <= plan["uniform_liters"]


def test_cli_entry_point(tmp_path):
    code, out, _ = ce.run_cli(["--help"])
    assert code == 0 and "gen-synth" in out
    code, _, err = ce.run_cli(["quantize", "--workdir", str(tmp_path)])
    assert code == 1 and err.startswith("error:")
    assert ce.run_cli(["no-such-command"])[0] == 2

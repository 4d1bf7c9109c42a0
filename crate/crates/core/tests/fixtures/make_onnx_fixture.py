"""Builds tiny_cnn.onnx and its expected outputs for the network-backend test."""
import json

import numpy as np
import onnx
from onnx import TensorProto, helper, numpy_helper

rng = np.random.default_rng(3)
conv_w = rng.normal(0, 0.3, (4, 3, 3, 3)).astype(np.float32)
conv_b = rng.normal(0, 0.1, (4,)).astype(np.float32)
fc_w = rng.normal(0, 0.5, (5, 4)).astype(np.float32)
fc_b = rng.normal(0, 0.1, (5,)).astype(np.float32)

nodes = [
    helper.make_node("Conv", ["x", "cw", "cb"], ["c"], pads=[1, 1, 1, 1]),
    helper.make_node("Relu", ["c"], ["r"]),
    helper.make_node("GlobalAveragePool", ["r"], ["g"]),
    helper.make_node("Flatten", ["g"], ["f"]),
    helper.make_node("Gemm", ["f", "fw", "fb"], ["y"], transB=1),
]
graph = helper.make_graph(
    nodes,
    "tiny_cnn",
    [helper.make_tensor_value_info("x", TensorProto.FLOAT, [1, 3, 32, 32])],
    [helper.make_tensor_value_info("y", TensorProto.FLOAT, [1, 5])],
    [numpy_helper.from_array(a, n) for a, n in [(conv_w, "cw"), (conv_b, "cb"), (fc_w, "fw"), (fc_b, "fb")]],
)
model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 13)])
model.ir_version = 8
onnx.checker.check_model(model)
onnx.save(model, "tiny_cnn.onnx")


def forward(x):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    out = np.zeros((4, 32, 32))
    for o in range(4):
        for i in range(3):
            for dy in range(3):
                for dx in range(3):
                    out[o] += conv_w[o, i, dy, dx] * xp[i, dy:dy + 32, dx:dx + 32]
        out[o] += conv_b[o]
    g = np.maximum(out, 0).mean(axis=(1, 2))
    return fc_w.astype(np.float64) @ g + fc_b


# Gray 128 everywhere, and a horizontal red ramp.
flat = np.full((3, 32, 32), 128 / 255.0)
ramp = np.zeros((3, 32, 32))
ramp[0] = (np.arange(32) * 8)[None, :] / 255.0
cases = {"flat128": forward(flat).tolist(), "red_ramp": forward(ramp).tolist()}
with open("tiny_cnn_expected.json", "w") as f:
    json.dump(cases, f, indent=2)

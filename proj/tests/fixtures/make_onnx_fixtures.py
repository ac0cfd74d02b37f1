"""Regenerates the tiny ONNX models used by the extractor tests."""
import onnx
from onnx import TensorProto, helper


def save(graph, path):
    model = helper.make_model(graph, opset_imports=[helper.make_opsetid("", 11)])
    model.ir_version = 6
    onnx.checker.check_model(model)
    onnx.save(model, path)


def identity(path):
    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 64, 64])
    y = helper.make_tensor_value_info("output", TensorProto.FLOAT, [1, 3, 64, 64])
    node = helper.make_node("Identity", ["input"], ["output"], name="identity")
    save(helper.make_graph([node], "identity", [x], [y]), path)


def strided_taps(path):
    # Two average-pool stages: stride 2 and stride 4 outputs, like a toy backbone.
    x = helper.make_tensor_value_info("input", TensorProto.FLOAT, [1, 3, 64, 64])
    s2 = helper.make_tensor_value_info("layer2", TensorProto.FLOAT, [1, 3, 32, 32])
    s4 = helper.make_tensor_value_info("layer3", TensorProto.FLOAT, [1, 3, 16, 16])
    n1 = helper.make_node("AveragePool", ["input"], ["layer2"], name="pool2",
                          kernel_shape=[2, 2], strides=[2, 2])
    n2 = helper.make_node("AveragePool", ["layer2"], ["layer3"], name="pool3",
                          kernel_shape=[2, 2], strides=[2, 2])
    save(helper.make_graph([n1, n2], "strided_taps", [x], [s2, s4]), path)


if __name__ == "__main__":
    identity("identity.onnx")
    strided_taps("strided_taps.onnx")

import json
import subprocess
import sys

import numpy as np
import pytest

from qnnc.cli import main
from qnnc.compare import fp32_diff, oracle_diff
from qnnc.frontend import load_tensor_file, parse_model, save_tensor_file, serialize_model
from qnnc.ir import GraphBuilder, dump_ir, infer_types
from qnnc.opt import check_regions
from qnnc.pipeline import PASS_NAMES, PassError, compile_model
from qnnc.runtime import reference_qnn_interpreter, run_graph

from conftest import CORPUS, DATA, TARGETS, corpus_inputs, corpus_model, model_bytes


def golden(name):
    return load_tensor_file((DATA / f"{name}.golden.json").read_bytes())


# pipeline


def test_pipeline_on_base_only_graph():
    b = GraphBuilder()
    x = b.input("x", (4,), "i32")
    g = infer_types(b.build([b.op("relu", [x])], output_names=["y"]))
    res = compile_model(serialize_model(g))
    assert [n.op for n in res.graph.nodes] == ["input", "relu"]


def test_unknown_target_rejected():
    with pytest.raises(KeyError, match="riscv"):
        compile_model(model_bytes("composite_conv"), "riscv")


def test_unknown_dump_pass_rejected():
    with pytest.raises(ValueError, match="unknown pass 'lower'"):
        compile_model(model_bytes("composite_conv"), dump_after=["lower"])


def test_stages_follow_pass_order():
    res = compile_model(model_bytes("tiny_cnn"), keep_stages=True)
    assert tuple(res.stages) == PASS_NAMES
    assert res.stages["legalize"].count_ops("qnn.") > 0
    assert res.stages["canonicalize"].count_ops("qnn.") == 0


def test_dump_after_legalize_shows_weight_requantize():
    res = compile_model(model_bytes("composite_conv"), "x86-vnni", dump_after=["legalize"])
    text = res.dumps["legalize"]
    assert "qnn.requantize" in text and "qnn.conv2d" in text


def test_pass_error_names_pass():
    doc = json.loads(model_bytes("composite_conv"))
    doc["nodes"][1]["attrs"]["padding"] = [1]
    with pytest.raises(PassError) as info:
        compile_model(json.dumps(doc))
    assert info.value.pass_name == "parse"


@pytest.mark.parametrize("name", CORPUS)
def test_compile_is_deterministic(name):
    a = compile_model(model_bytes(name), "x86-vnni").graph
    b = compile_model(model_bytes(name), "x86-vnni").graph
    assert dump_ir(a) == dump_ir(b)


@pytest.mark.parametrize("target", TARGETS)
@pytest.mark.parametrize("name", CORPUS)
def test_corpus_matches_oracle_and_golden(name, target, backend):
    res = compile_model(model_bytes(name), target)
    assert res.graph.count_ops("qnn.") == 0 and res.graph.count_ops("tflite.") == 0
    assert check_regions(res.graph) == []
    inputs = corpus_inputs(name)
    want = golden(name)
    for out, key in zip(run_graph(res.graph, inputs), res.graph.names()):
        assert out.dtype == want[key].dtype
        np.testing.assert_array_equal(out, want[key])
    assert oracle_diff(res.model, res.graph, inputs).max_abs_diff == 0


def test_rounding_override_changes_attribute():
    res = compile_model(model_bytes("perchannel_residual"), rounding="away", keep_stages=True)
    modes = {n.attrs["rounding"].value for n in res.stages["expand"].nodes if "rounding" in n.attrs}
    assert modes == {"away"}


def test_fp32_report_matches_fixture():
    name = "symmetric_conv_fp32"
    res = compile_model(model_bytes(name))
    report = fp32_diff(res.model, res.graph, corpus_inputs(name)).to_json()
    fixture = json.loads((DATA / f"{name}.fp32_report.json").read_text())
    assert report["top1_agreement"] == fixture["top1_agreement"]
    assert report["max_abs_diff"] == pytest.approx(fixture["max_abs_diff"], rel=1e-6)


# cli


def cli(*argv):
    return main([str(a) for a in argv])


def test_cli_compile_run_matches_golden(tmp_path):
    out, result = tmp_path / "tiny.compiled.json", tmp_path / "out.json"
    assert cli("compile", DATA / "tiny_cnn.model.json", "--out", out) == 0
    assert cli("run", out, "--inputs", DATA / "tiny_cnn.inputs.json", "--outputs", result) == 0
    assert result.read_bytes() == (DATA / "tiny_cnn.golden.json").read_bytes()


def test_cli_dump_ir(capsys):
    assert cli("compile", DATA / "composite_conv.model.json", "--dump-ir", "after=canonicalize",
               "--dump-ir", "after=parse") == 0
    out = capsys.readouterr().out
    assert out.index("// IR after parse") < out.index("// IR after canonicalize")
    assert "tflite.quantized_conv2d" in out


def test_cli_bad_dump_pass(capsys):
    assert cli("compile", DATA / "composite_conv.model.json", "--dump-ir", "after=lower") == 1
    err = capsys.readouterr().err
    assert "unknown pass 'lower'" in err and "canonicalize" in err


def test_cli_unknown_target(capsys):
    assert cli("compile", DATA / "composite_conv.model.json", "--target", "riscv") == 1
    err = capsys.readouterr().err
    assert "riscv" in err and "x86-vnni" in err


def test_cli_no_command():
    assert cli() == 1


def test_cli_missing_file(tmp_path):
    assert cli("compile", tmp_path / "nope.json") == 1


def test_cli_run_identity(tmp_path):
    b = GraphBuilder()
    x = b.input("x", (3,), "i8")
    model = tmp_path / "id.json"
    model.write_bytes(serialize_model(infer_types(b.build([x], output_names=["x"]))))
    inputs = tmp_path / "in.json"
    inputs.write_bytes(save_tensor_file({"x": np.array([-1, 0, 7], np.int8)}))
    assert cli("run", model, "--inputs", inputs, "--outputs", tmp_path / "o.json") == 0
    assert load_tensor_file((tmp_path / "o.json").read_bytes())["x"].tolist() == [-1, 0, 7]


def test_cli_run_missing_input(tmp_path, capsys):
    compiled = tmp_path / "c.json"
    assert cli("compile", DATA / "composite_conv.model.json", "--out", compiled) == 0
    empty = tmp_path / "empty.json"
    empty.write_bytes(save_tensor_file({}))
    assert cli("run", compiled, "--inputs", empty, "--outputs", tmp_path / "o.json") == 2
    assert "'x'" in capsys.readouterr().err


def test_cli_diff_oracle(capsys):
    assert cli("diff", DATA / "perchannel_residual.model.json", "--inputs",
               DATA / "perchannel_residual.inputs.json", "--target", "armv8", "--json") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["mode"] == "oracle" and report["max_abs_diff"] == 0


def test_cli_diff_fp32(capsys):
    assert cli("diff", DATA / "symmetric_conv_fp32.model.json", "--inputs",
               DATA / "symmetric_conv_fp32.inputs.json", "--mode", "fp32") == 0
    out = capsys.readouterr().out
    assert "max abs diff" in out and "top-1 agreement: 1.0000" in out


def test_cli_fp32_without_reference(capsys):
    assert cli("diff", DATA / "composite_conv.model.json", "--inputs", DATA / "composite_conv.inputs.json",
               "--mode", "fp32") == 2


def test_cli_footprint_json(capsys):
    assert cli("footprint", DATA / "tiny_cnn.model.json", "--compare-fp32", "--json") == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ratios"]["weight_ratio"] == 0.25
    assert doc["quantized"]["weight_bytes"] * 4 == doc["fp32"]["weight_bytes"]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qnnc.cli", "footprint", str(DATA / "tiny_cnn.model.json")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "weight bytes" in proc.stdout


def test_oracle_on_composites_matches_compiled():
    m = corpus_model("composite_conv")
    raw = parse_model(model_bytes("composite_conv"), expand=False)
    inputs = corpus_inputs("composite_conv")
    np.testing.assert_array_equal(reference_qnn_interpreter(raw, inputs)[0],
                                  reference_qnn_interpreter(m.graph, inputs)[0])

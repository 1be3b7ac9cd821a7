"""End-to-end CLI runs, in process via cli.main(argv).

A session-scoped workspace holds a generated model, the worked 5-neuron
example exported to a model file, and property files, so individual tests
stay fast.
"""

import numpy as np
import pytest

import redkit.onnx_codec as oc
from conftest import build_fig1
from redkit import export_onnx, forward, import_onnx
from redkit.cli import main


@pytest.fixture(scope="session")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    paths = {
        "fig1": str(root / "fig1.onnx"),
        "center": str(root / "center.txt"),
        "prop_true": str(root / "true.vnnlib"),
        "prop_false": str(root / "false.vnnlib"),
        "gen": str(root / "gen.onnx"),
        "root": root,
    }
    with open(paths["fig1"], "wb") as fh:
        fh.write(export_onnx(build_fig1()))
    with open(paths["center"], "w") as fh:
        fh.write("0.0 0.0\n")
    decls = "\n".join(
        f"(declare-const {v} Real)" for v in ("X_0", "X_1", "Y_0", "Y_1")
    )
    box = (
        "(assert (>= X_0 -1.0))\n(assert (<= X_0 1.0))\n"
        "(assert (>= X_1 -1.0))\n(assert (<= X_1 1.0))\n"
    )
    with open(paths["prop_true"], "w") as fh:
        fh.write(f"{decls}\n{box}(assert (<= Y_0 -3.0))\n")
    with open(paths["prop_false"], "w") as fh:
        fh.write(f"{decls}\n{box}(assert (<= Y_0 1.0))\n")
    rc = main(["gen", "--layers", "3", "--width", "16", "--input-dim", "4",
               "--stable-frac", "0.5", "--seed", "3", "--out", paths["gen"]])
    assert rc == 0
    return paths


# --- gen ---


def test_gen_is_deterministic(ws, tmp_path, capsys):
    out = tmp_path / "again.onnx"
    rc = main(["gen", "--layers", "3", "--width", "16", "--input-dim", "4",
               "--stable-frac", "0.5", "--seed", "3", "--out", str(out)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "48 relu neurons" in msg
    assert "24 planted stable" in msg
    with open(ws["gen"], "rb") as fh:
        assert out.read_bytes() == fh.read()


def test_gen_writes_sidecar(ws):
    import json
    with open(ws["gen"] + ".json") as fh:
        sidecar = json.load(fh)
    assert sidecar["hidden_widths"] == [16, 16, 16]
    assert len(sidecar["plants"]) == 24


def test_gen_bad_fraction_is_usage_error(tmp_path, capsys):
    rc = main(["gen", "--stable-frac", "2.0", "--out", str(tmp_path / "x.onnx")])
    assert rc == 2
    assert "stable_fraction" in capsys.readouterr().err


# --- reduce ---


def test_reduce_worked_example(ws, tmp_path, capsys):
    out = tmp_path / "reduced.onnx"
    rep = tmp_path / "report.csv"
    rc = main(["reduce", "--model", ws["fig1"], "--center", ws["center"],
               "--eps", "1.0", "--method", "interval",
               "--out", str(out), "--report", str(rep)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "relu neurons: 5 -> 3" in msg
    assert "(40.0% removed)" in msg
    csv = rep.read_text().splitlines()
    assert csv[0].startswith("layer,")
    assert csv[1] == "0,5,1,3,1,3,1"
    assert csv[2].startswith("# totals: relu_before=5 relu_after=3 ratio=1.6667")
    net, _ = import_onnx(out.read_bytes())
    fig1 = build_fig1()
    rng = np.random.default_rng(0)
    for x in rng.uniform(-1, 1, size=(200, 2)):
        assert np.abs(forward(net, x) - forward(fig1, x)).max() <= 1e-6


def test_reduce_uses_sidecar_region(ws, capsys):
    rc = main(["reduce", "--model", ws["gen"]])
    assert rc == 0
    out = capsys.readouterr().out
    assert "relu neurons: 48 ->" in out
    # the 12 planted-deactivated neurons are guaranteed to disappear
    after = int(out.split("relu neurons: 48 -> ")[1].split()[0])
    assert after <= 36


def test_reduce_without_region_is_usage_error(ws, tmp_path, capsys):
    bare = tmp_path / "bare.onnx"
    bare.write_bytes(open(ws["fig1"], "rb").read())
    rc = main(["reduce", "--model", str(bare)])
    assert rc == 2
    assert "no input region" in capsys.readouterr().err


def test_reduce_backend_flag(ws, capsys):
    rc = main(["--backend", "numpy", "reduce", "--model", ws["gen"]])
    assert rc == 0
    from redkit import kernels
    kernels.set_backend("auto")


# --- stats / bounds ---


def test_stats_table(ws, capsys):
    rc = main(["stats", "--model", ws["fig1"]])
    assert rc == 0
    out = capsys.readouterr().out
    assert "input width 2, output width 2" in out
    assert "27 parameters, 5 relu neurons in 1 layers" in out
    assert "shape: sequential chain" in out


def test_bounds_csv_values(ws, capsys):
    rc = main(["bounds", "--model", ws["fig1"], "--center", ws["center"],
               "--eps", "1.0", "--method", "interval"])
    assert rc == 0
    cap = capsys.readouterr()
    lines = cap.out.strip().splitlines()
    assert lines[0] == "layer,neuron,lower,upper,method"
    # first hidden neuron of the worked example: -x1 - x2 - 2 on the unit box
    assert lines[1] == "0,0,-4.0,0.0,interval"
    assert "output 0: [-7, 7]" in cap.err


def test_bounds_written_to_file(ws, tmp_path, capsys):
    out = tmp_path / "b.csv"
    rc = main(["bounds", "--model", ws["fig1"], "--center", ws["center"],
               "--eps", "1.0", "--out", str(out)])
    assert rc == 0
    assert out.read_text().startswith("layer,neuron,lower,upper,method")
    assert "wrote bounds for 7 neurons" in capsys.readouterr().out


# --- equiv ---


def test_equiv_accepts_the_reduction(ws, tmp_path, capsys):
    red = tmp_path / "r.onnx"
    main(["reduce", "--model", ws["fig1"], "--center", ws["center"],
          "--eps", "1.0", "--out", str(red)])
    capsys.readouterr()
    rc = main(["equiv", "--model", ws["fig1"], "--other", str(red),
               "--center", ws["center"], "--eps", "1.0", "--grid", "21"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "grid 21 per axis" in out
    assert "equivalent within 1e-06: yes" in out


def test_equiv_flags_a_different_model(ws, tmp_path, capsys):
    other = tmp_path / "other.onnx"
    main(["gen", "--layers", "1", "--width", "4", "--input-dim", "2",
          "--seed", "9", "--out", str(other)])
    capsys.readouterr()
    rc = main(["equiv", "--model", ws["fig1"], "--other", str(other),
               "--center", ws["center"], "--eps", "1.0"])
    assert rc == 1
    assert "equivalent within 1e-06: NO" in capsys.readouterr().out


# --- verify ---


def test_verify_true_property(ws, capsys):
    rc = main(["verify", "--model", ws["fig1"], "--vnnlib", ws["prop_true"]])
    assert rc == 0
    out = capsys.readouterr().out
    assert "incomplete: verified" in out


def test_verify_interval_needs_bab(ws, capsys):
    rc = main(["verify", "--model", ws["fig1"], "--vnnlib", ws["prop_true"],
               "--method", "interval"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "incomplete: unknown" in out
    assert "branch and bound: verified" in out
    assert "1 splits" in out


def test_verify_false_property_finds_counterexample(ws, capsys):
    rc = main(["verify", "--model", ws["fig1"], "--vnnlib", ws["prop_false"],
               "--falsify", "4096"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "branch and bound: unknown" in out
    assert "counterexample:" in out


def test_verify_no_bab_stops_early(ws, capsys):
    rc = main(["verify", "--model", ws["fig1"], "--vnnlib", ws["prop_true"],
               "--method", "interval", "--no-bab", "--falsify", "0"])
    assert rc == 1
    out = capsys.readouterr().out
    assert "incomplete: unknown" in out
    assert "branch and bound" not in out


# --- bench ---


def test_bench_reports_speedup_and_csv(ws, tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    rc = main(["bench", "--model", ws["fig1"], "--vnnlib", ws["prop_true"],
               "--repeats", "2", "--out", str(out_csv)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "original   verified" in out
    assert "reduced    verified" in out
    assert "speedup:" in out
    rows = out_csv.read_text().strip().splitlines()
    assert rows[0] == "property,variant,status,median_time_s,splits,bound"
    assert len(rows) == 3


# --- simplify ---


def _residual_model_bytes() -> bytes:
    rng = np.random.default_rng(5)
    w = rng.normal(size=(3, 3))

    def t(name, arr):
        a32 = np.ascontiguousarray(arr, dtype="<f4")
        return oc.TensorP(name=name, dims=list(a32.shape), data_type=oc.DT_FLOAT,
                          raw_data=a32.tobytes())

    g1 = oc.NodeP(op_type="Gemm", name="g1", inputs=["x", "w1"], outputs=["h"])
    g1.attributes["transB"] = oc.AttrP("transB", oc.AT_INT, i=1)
    r = oc.NodeP(op_type="Relu", name="r", inputs=["h"], outputs=["hr"])
    g2 = oc.NodeP(op_type="Gemm", name="g2", inputs=["hr", "w2"], outputs=["h2"])
    g2.attributes["transB"] = oc.AttrP("transB", oc.AT_INT, i=1)
    add = oc.NodeP(op_type="Add", name="skip", inputs=["h2", "x"], outputs=["y"])
    graph = oc.GraphP(
        name="res", nodes=[g1, r, g2, add],
        initializers=[t("w1", w), t("w2", rng.normal(size=(3, 3)))],
        inputs=[oc.ValueInfoP("x", oc.DT_FLOAT, [1, 3])],
        outputs=[oc.ValueInfoP("y", oc.DT_FLOAT, [1, 3])],
    )
    return oc.encode_model(oc.ModelP(graph=graph, opset_imports=[("", 13)]))


def test_simplify_rewrites_residual_to_chain(tmp_path, capsys):
    model = tmp_path / "res.onnx"
    model.write_bytes(_residual_model_bytes())
    center = tmp_path / "c.txt"
    center.write_text("0 0 0\n")
    out = tmp_path / "chain.onnx"
    rc = main(["simplify", "--model", str(model), "--center", str(center),
               "--eps", "1.0", "--out", str(out)])
    assert rc == 0
    msg = capsys.readouterr().out
    assert "wrote sequential model" in msg
    chain, _ = import_onnx(out.read_bytes())
    orig, _ = import_onnx(model.read_bytes())
    rng = np.random.default_rng(1)
    for x in rng.uniform(-1, 1, size=(200, 3)):
        assert np.abs(forward(chain, x) - forward(orig, x)).max() <= 1e-5


def test_verify_simplifies_branching_models(tmp_path, capsys):
    model = tmp_path / "res.onnx"
    model.write_bytes(_residual_model_bytes())
    prop = tmp_path / "p.vnnlib"
    decls = "\n".join(
        f"(declare-const {v} Real)" for v in ("X_0", "X_1", "X_2", "Y_0")
    )
    prop.write_text(
        f"{decls}\n"
        "(assert (>= X_0 -0.1)) (assert (<= X_0 0.1))\n"
        "(assert (>= X_1 -0.1)) (assert (<= X_1 0.1))\n"
        "(assert (>= X_2 -0.1)) (assert (<= X_2 0.1))\n"
        "(assert (<= Y_0 -100.0))\n"
    )
    rc = main(["verify", "--model", str(model), "--vnnlib", str(prop)])
    assert rc == 0
    assert "not a chain" in capsys.readouterr().err


# --- error surfaces ---


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["reduce"])  # missing --model
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2


def test_unsupported_model_exit_code(tmp_path, capsys):
    sig = oc.NodeP(op_type="Sigmoid", name="s", inputs=["x"], outputs=["y"])
    g = oc.GraphP(name="g", nodes=[sig],
                  inputs=[oc.ValueInfoP("x", oc.DT_FLOAT, [1, 2])],
                  outputs=[oc.ValueInfoP("y", oc.DT_FLOAT, [1, 2])])
    bad = tmp_path / "bad.onnx"
    bad.write_bytes(oc.encode_model(oc.ModelP(graph=g, opset_imports=[("", 13)])))
    rc = main(["stats", "--model", str(bad)])
    assert rc == 3
    assert "s:Sigmoid" in capsys.readouterr().err


def test_not_an_onnx_file_exit_code(tmp_path, capsys):
    junk = tmp_path / "junk.onnx"
    junk.write_bytes(b"\x00\x01\x02 definitely not a model")
    rc = main(["stats", "--model", str(junk)])
    assert rc == 3
    assert "error:" in capsys.readouterr().err


def test_malformed_vnnlib_exit_code(ws, tmp_path, capsys):
    prop = tmp_path / "broken.vnnlib"
    prop.write_text("(assert (>= X_0")
    rc = main(["verify", "--model", ws["fig1"], "--vnnlib", str(prop)])
    assert rc == 2
    assert "error:" in capsys.readouterr().err

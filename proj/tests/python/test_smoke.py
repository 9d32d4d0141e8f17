import json
import os
import subprocess
import sys
import textwrap

import pytest

import rtqc

IDENTITY = {
    "encode_command_template": "sh -c 'cp \"$0\" \"$1\"' {input} {output} {qp} {width} {height} {fps}",
    "decode_command_template": "cp {input} {output}",
}


def test_metrics():
    assert rtqc.psnr_plane(bytes([0] * 64), bytes([255] * 64)) == pytest.approx(0.0, abs=1e-9)
    assert rtqc.psnr_plane(bytes([7] * 64), bytes([7] * 64)) == rtqc.PSNR_CAP_DB
    assert rtqc.bandwidth_efficiency(2000.0, 1000.0) == 0.5
    assert rtqc.coefficient_of_variation([30.0, 50.0]) == 0.25
    with pytest.raises(rtqc.RtqcError):
        rtqc.bandwidth_efficiency(0.0, 1.0)


def test_protocol_handler():
    line = json.dumps({"v": 1, "id": 4, "chunk": "/c.yuv", "w": 96, "h": 64, "fps": 25.0, "n": 8, "lambda_db": 38.0})
    assert rtqc.parse_request(line)["lambda_db"] == 38.0
    reply = json.loads(rtqc.handle_request_line(line, lambda req: (int(req["lambda_db"]) - 10, "py")))
    assert reply == {"v": 1, "id": 4, "qp": 28, "model": "py"}
    assert "error" in json.loads(rtqc.handle_request_line("nonsense", lambda req: (0, "py")))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("rtqc")
    corpus = root / "corpus"
    assert rtqc.write_synthetic_corpus(str(corpus), clips=2, chunks=2, width=16, height=16, frames_per_chunk=4) == 2
    tables, encodes, failures = rtqc.build_rd_tables(str(corpus), str(root / "tables"), frames_per_chunk=4,
                                                     encoder_json=json.dumps(IDENTITY))
    assert (tables, encodes, failures) == (4, 4 * 52, 0)
    return root


def test_tables_and_training_manifest(workspace):
    tables = rtqc.load_rd_tables(workspace / "tables")
    assert len(tables) == 4
    assert rtqc.oracle_select(tables[0], 40.0) == (51, False)
    train, test = rtqc.emit_training_manifest(str(workspace / "tables"), str(workspace / "manifest"), 0.5, 1)
    assert (train, test) == (2 * 52, 2 * 52)
    rows = rtqc.read_training_manifest(str(workspace / "manifest" / "train.csv"))
    assert rows[0]["T"] == 4 and os.path.exists(rows[0]["chunk_path"])


def test_python_predictor_drives_learned_controller(workspace, tmp_path):
    script = tmp_path / "predictor.py"
    script.write_text(textwrap.dedent("""
        import rtqc
        rtqc.serve_stdio(lambda req: (33, "py-const"))
    """))
    env_path = os.pathsep.join(p for p in sys.path if p)
    predictor = f"exec:env PYTHONPATH={env_path} {sys.executable} {script}"
    agg = rtqc.run_experiment(workspace / "corpus", workspace / "tables", "learned", 40.0, out_dir=tmp_path / "out",
                              decrement=1, predictor=predictor, frames_per_chunk=4, encoder=IDENTITY)
    assert agg["chunks"] == 4
    assert agg["nonconformance_prob"] == 0.0
    with open(tmp_path / "out" / "records.csv") as f:
        header, first = f.readline().strip().split(","), f.readline().strip().split(",")
    rec = dict(zip(header, first))
    assert (rec["qp_raw"], rec["qp_final"], rec["fallback"]) == ("33", "32", "0")


def test_oracle_run(workspace):
    agg = rtqc.run_experiment(workspace / "corpus", workspace / "tables", "oracle", 45.0, frames_per_chunk=4,
                              encoder=IDENTITY)
    assert agg["mean_bw_eff"] == 1.0


def test_cli_available():
    exe = os.environ.get("RTQC_CLI")
    if not exe:
        pytest.skip("RTQC_CLI not set")
    out = subprocess.run([exe, "--help"], capture_output=True, text=True, check=True)
    assert "build-tables" in out.stdout

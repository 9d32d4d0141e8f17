"""Python access to the rtqc harness: metrics, RD tables, training manifests and the predictor protocol."""

import json
import sys

from . import _core
from ._core import (
    PSNR_CAP_DB,
    PROTOCOL_VERSION,
    InvalidArgumentError,
    MissingTableError,
    PredictorReportedError,
    ProtocolError,
    RtqcError,
    bandwidth_efficiency,
    build_rd_tables,
    coefficient_of_variation,
    emit_training_manifest,
    psnr_plane,
    read_training_manifest,
    serialize_error,
    serialize_response,
    write_synthetic_corpus,
)

__all__ = [
    "PSNR_CAP_DB",
    "PROTOCOL_VERSION",
    "InvalidArgumentError",
    "MissingTableError",
    "PredictorReportedError",
    "ProtocolError",
    "RtqcError",
    "bandwidth_efficiency",
    "build_rd_tables",
    "coefficient_of_variation",
    "emit_training_manifest",
    "handle_request_line",
    "load_rd_tables",
    "oracle_select",
    "parse_request",
    "psnr_plane",
    "read_training_manifest",
    "run_experiment",
    "serialize_error",
    "serialize_response",
    "serve_stdio",
    "write_synthetic_corpus",
]


def load_rd_tables(tables_dir):
    return [json.loads(t) for t in _core.load_rd_tables(str(tables_dir))]


def oracle_select(table, lambda_db):
    """Returns (qp, nonconformable) for a table dict as produced by load_rd_tables."""
    return _core.oracle_select(json.dumps(table), lambda_db)


def parse_request(line):
    return json.loads(_core.parse_request(line))


def handle_request_line(line, predict):
    """`predict(request_dict)` returns (qp, model_id); the reply line is returned."""
    return _core.handle_request_line(line, lambda req: tuple(predict(json.loads(req))))


def serve_stdio(predict, stdin=None, stdout=None):
    """Runs a predictor over newline-delimited JSON until EOF."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.rstrip("\n")
        if not line:
            continue
        stdout.write(handle_request_line(line, predict) + "\n")
        stdout.flush()


def run_experiment(corpus_dir, tables_dir, controller, lambda_db, out_dir="", decrement=1, predictor="",
                   frames_per_chunk=8, encoder=None):
    """Runs one controller over a corpus and returns the aggregates dict."""
    enc = json.dumps(encoder) if encoder else ""
    return json.loads(_core.run_experiment(str(corpus_dir), str(tables_dir), controller, lambda_db, str(out_dir),
                                           decrement, predictor, frames_per_chunk, enc))

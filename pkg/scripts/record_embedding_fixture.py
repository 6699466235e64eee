#!/usr/bin/env python3
"""Record the embeddings replay fixture used by the remote-provider tests.

No sentence-transformer checkpoint is reachable from CI, so a local stand-in
server answers the embeddings wire protocol with a fixed random projection
of trigram indicator vectors. The remote provider talks to it over HTTP and
RecordingEmbeddingTransport captures every vector it returns.
"""

import argparse
import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer
from pathlib import Path

import numpy as np

from procmodel.breakdown import ELEMENT_KEYS, breakdown
from procmodel.embeddings import LexicalFallbackProvider, RecordingEmbeddingTransport, RemoteEmbeddingProvider, urllib_transport
from procmodel.generation import extract_json
from procmodel.model import parse_model
from procmodel.similarity import serialize_item

DIM = 32
_lex = LexicalFallbackProvider()
_proj = np.random.default_rng(7).standard_normal((_lex.dim, DIM))


def standin_embedding(text: str) -> list[float]:
    v = _lex.embed(text) @ _proj
    return [round(float(x), 6) for x in v / np.linalg.norm(v)]


class Handler(BaseHTTPRequestHandler):
    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        data = [{"index": i, "embedding": standin_embedding(t)} for i, t in enumerate(body["input"])]
        out = json.dumps({"data": data}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--dataset", default="tests/fixtures/dataset")
    ap.add_argument("--replay", default="tests/fixtures/replay")
    ap.add_argument("--out", default="tests/fixtures/embeddings_replay.json")
    args = ap.parse_args()

    models = [parse_model(p.read_text()) for p in sorted(Path(args.dataset).glob("*/ground_truth.json"))]
    for p in sorted(Path(args.replay).glob("*.json")):
        try:
            models.append(parse_model(extract_json(json.loads(p.read_text())["response"])))
        except Exception:
            continue
    texts = sorted(
        {serialize_item(x) for m in models for key in ELEMENT_KEYS for x in breakdown(m, strict=False)[key]}
    )

    server = HTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    out = Path(args.out)
    out.unlink(missing_ok=True)
    provider = RemoteEmbeddingProvider(
        f"http://127.0.0.1:{server.server_port}/v1/embeddings",
        "standin-trigram-projection-32",
        transport=RecordingEmbeddingTransport(out, urllib_transport()),
        batch_size=50,
    )
    provider.embed_many(texts)
    server.shutdown()
    print(f"recorded {len(texts)} embeddings -> {out}")


if __name__ == "__main__":
    main()

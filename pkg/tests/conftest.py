import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from analogopt.core import (
    Dataset,
    DesignPoint,
    DesignSpace,
    EvalRecord,
    Parameter,
    Source,
    dataset_append,
)
from analogopt.surrogate import GpModel


def make_record(fom, iteration=0, source=Source.RANDOM, point=(0.5,), metrics=None):
    return EvalRecord(
        point=DesignPoint(tuple(point)),
        metrics=metrics or {"objective": fom},
        regions={},
        simulation_ok=True,
        fom=fom,
        source=source,
        iteration=iteration,
    )


def make_dataset(foms):
    dataset = Dataset()
    for f in foms:
        dataset_append(dataset, make_record(f))
    return dataset


@pytest.fixture
def unit_space():
    return DesignSpace((Parameter("a", 0.0, 1.0), Parameter("b", 0.0, 1.0)))


def model_with_prior(mu, sigma):
    """A GP whose posterior far from its single training point is N(mu, sigma^2)."""
    sv = max(sigma**2, 1e-30)
    nv = 1e-12
    return GpModel(
        train_inputs=np.array([[1000.0]]),
        train_targets=np.array([0.0]),
        lengthscales=np.array([1.0]),
        signal_variance=sv,
        noise_variance=nv,
        chol=np.array([[np.sqrt(sv + nv)]]),
        alpha=np.array([0.0]),
        target_mean=mu,
        target_std=1.0,
        log_marginal=0.0,
    )


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        status, body = self.server.script[min(self.server.hits, len(self.server.script) - 1)]
        self.server.hits += 1
        payload = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class StubServer:
    """Minimal chat-completions endpoint replaying (status, body) pairs."""

    def __init__(self, script):
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
        self.server.script = script
        self.server.hits = 0
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def endpoint(self):
        return f"http://127.0.0.1:{self.server.server_port}/v1"

    @property
    def hits(self):
        return self.server.hits

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def stub_server():
    servers = []

    def _make(script):
        server = StubServer(script)
        servers.append(server)
        return server

    yield _make
    for server in servers:
        server.close()


def chat_body(content):
    import json

    return json.dumps({"choices": [{"message": {"role": "assistant", "content": content}}]})

"""HTTP client for an external batch sampler, plus a local mock server.

Wire protocol: ``POST /sample`` with JSON body ``{"model", "num_reads",
"seed"}``; the reply is ``{"samples": [[0, 1, ...], ...]}``.
"""

from __future__ import annotations

import contextlib
import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, replace
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional

import numpy as np

from .model import EffectiveModel, ModelError
from .samplers import SampleBatch, SamplerConfig, SamplerError, gibbs_sample, onehot_gibbs_sample

log = logging.getLogger(__name__)

ENDPOINT_ENV = "QUBOLIN_ANNEALER_URL"
MAX_ATTEMPTS = 3
BACKOFF_BASE = 0.1
SAMPLER_ID = "external"


class AnnealerError(SamplerError):
    pass


def _url(endpoint: str) -> str:
    endpoint = endpoint.strip()
    if "://" not in endpoint:
        endpoint = "http://" + endpoint
    return endpoint.rstrip("/") + "/sample"


def _parse_samples(payload, n_vars: int) -> np.ndarray:
    if not isinstance(payload, dict) or not isinstance(payload.get("samples"), list):
        raise AnnealerError("malformed response: expected an object with a 'samples' list")
    rows = payload["samples"]
    if not rows:
        raise AnnealerError("malformed response: empty sample list")
    out = np.empty((len(rows), n_vars), dtype=np.int8)
    for r, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n_vars:
            got = len(row) if isinstance(row, list) else type(row).__name__
            raise AnnealerError(f"sample {r} has length {got}, expected {n_vars}")
        for i, v in enumerate(row):
            # bool is an int subclass; only literal 0/1 integers are accepted
            if type(v) is not int or v not in (0, 1):
                raise AnnealerError(f"malformed response: sample {r} bit {i} is {v!r}")
        out[r] = row
    return out


def external_annealer_submit(m: EffectiveModel, cfg: SamplerConfig, endpoint: str,
                             timeout: float = 60.0) -> SampleBatch:
    """Send ``m`` to the sampling service and return its samples with locally computed energies.

    Network failures are retried with exponential backoff (at most
    ``MAX_ATTEMPTS`` attempts); HTTP error statuses and malformed replies
    are not retried.
    """
    body = json.dumps({"model": m.to_dict(), "num_reads": cfg.n_samples, "seed": cfg.seed}).encode()
    url = _url(endpoint)
    for attempt in range(MAX_ATTEMPTS):
        req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                raw = resp.read()
            break
        except urllib.error.HTTPError as e:
            raise AnnealerError(f"sampler service returned HTTP {e.code}") from e
        except (urllib.error.URLError, ConnectionError, TimeoutError) as e:
            if attempt == MAX_ATTEMPTS - 1:
                raise AnnealerError(f"sampler service unreachable at {url}: {e}") from e
            delay = BACKOFF_BASE * 2 ** attempt
            log.warning("sampler request failed (%s); retrying in %.2fs", e, delay)
            time.sleep(delay)
    try:
        payload = json.loads(raw)
    except ValueError as e:
        raise AnnealerError("malformed response: not JSON") from e
    return SampleBatch.from_samples(m, _parse_samples(payload, m.objective.n_vars), SAMPLER_ID)


@dataclass(frozen=True)
class AnnealerSampler:
    """Sampler backend that forwards each call to an external service."""

    config: SamplerConfig
    endpoint: str

    def sample(self, model: EffectiveModel, seed: int) -> SampleBatch:
        return external_annealer_submit(model, replace(self.config, seed=seed), self.endpoint)


def gibbs_backend(base: SamplerConfig) -> Callable[[EffectiveModel, int, int], np.ndarray]:
    """Mock backend: one-hot Gibbs when the model carries groups, plain Gibbs otherwise."""

    def run(m: EffectiveModel, num_reads: int, seed: int) -> np.ndarray:
        cfg = replace(base, n_samples=num_reads, seed=seed)
        fn = onehot_gibbs_sample if m.onehot_groups else gibbs_sample
        return fn(m, cfg).samples

    return run


def _handler(backend):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            log.debug("mock annealer: " + fmt, *args)

        def _reply(self, code: int, obj) -> None:
            data = json.dumps(obj).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self):
            if self.path.rstrip("/") != "/sample":
                self._reply(404, {"error": "unknown path"})
                return
            try:
                req = json.loads(self.rfile.read(int(self.headers.get("Content-Length", 0))))
                m = EffectiveModel.from_dict(req["model"])
                num_reads, seed = int(req["num_reads"]), int(req["seed"])
                if num_reads < 1 or seed < 0:
                    raise ValueError("num_reads must be >= 1 and seed >= 0")
            except (ValueError, KeyError, TypeError, ModelError) as e:
                self._reply(400, {"error": str(e)})
                return
            samples = np.asarray(backend(m, num_reads, seed))
            self._reply(200, {"samples": samples.astype(int).tolist()})

    return Handler


def make_mock_server(host: str = "127.0.0.1", port: int = 0, config: Optional[SamplerConfig] = None,
                     backend=None) -> ThreadingHTTPServer:
    """HTTP server speaking the sampling protocol; ``backend(model, num_reads, seed)`` returns samples."""
    if backend is None:
        backend = gibbs_backend(config or SamplerConfig())
    return ThreadingHTTPServer((host, port), _handler(backend))


@contextlib.contextmanager
def mock_annealer(config: Optional[SamplerConfig] = None, backend=None, host: str = "127.0.0.1", port: int = 0):
    """Run a mock server on a background thread; yields its endpoint URL."""
    server = make_mock_server(host, port, config, backend)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://{host}:{server.server_address[1]}"
    finally:
        server.shutdown()
        server.server_close()
        thread.join()

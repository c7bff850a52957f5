"""Command line entry point: ``qubolin {run,histogram,compare-traffic,serve-mock}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from urllib.parse import urlparse

from .annealer import ENDPOINT_ENV, make_mock_server
from .harness import DEFAULT_ENDPOINT, PRESETS, ConfigError, RunSpec, compare_traffic, histogram, preset, run

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG = 0, 1, 2


def _spec_args(sp: argparse.ArgumentParser) -> None:
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set")
    src.add_argument("--config", help="RunSpec JSON file (e.g. a spec.json from an earlier run)")
    sp.add_argument("--seed", type=int, help="base seed (overrides the run spec)")
    sp.add_argument("--replicas", type=int, help="replica count (overrides the run spec)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes for replicas")
    sp.add_argument("--out", help="run directory; must not exist or be empty")


def _load(args) -> RunSpec:
    spec = preset(args.preset) if args.preset else RunSpec.load(args.config)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.replicas is not None:
        over["replicas"] = args.replicas
        if spec.seeds is not None and len(spec.seeds) != args.replicas:
            over["seeds"] = None
    if args.out is not None:
        over["output_dir"] = args.out
    try:
        return replace(spec, **over) if over else spec
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qubolin", description="Multiplier-iteration experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "solve replicas and write trajectories"),
                       ("histogram", "iterations-to-optimum histogram over replicas"),
                       ("compare-traffic", "compare the four route-choice methods on one instance")):
        _spec_args(sub.add_parser(name, help=text))
    sm = sub.add_parser("serve-mock", help="serve the mock sampling endpoint")
    sm.add_argument("--host", help="bind address")
    sm.add_argument("--port", type=int, help="port")
    return ap


def _serve(args) -> int:
    url = urlparse(os.environ.get(ENDPOINT_ENV) or DEFAULT_ENDPOINT)
    host = args.host or url.hostname or "127.0.0.1"
    port = args.port if args.port is not None else (url.port or 8765)
    server = make_mock_server(host, port)
    print(f"mock annealer listening on http://{host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "serve-mock":
        return _serve(args)
    try:
        spec = _load(args)
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "run":
            outcome = run(spec, jobs=args.jobs)
            n_ok = sum(o.result.converged for o in outcome.replicas)
            print(f"{outcome.directory}: {n_ok}/{len(outcome.replicas)} replicas converged")
            return EXIT_OK if outcome.all_converged else EXIT_NOT_CONVERGED
        if args.command == "histogram":
            out, its = histogram(spec, jobs=args.jobs)
            hits = sum(i is not None for i in its)
            print(f"{out}: {hits}/{len(its)} replicas reached the optimum")
            return EXIT_OK if hits == len(its) else EXIT_NOT_CONVERGED
        out, cmp = compare_traffic(spec)
        print(json.dumps(cmp["costs"]))
        return EXIT_OK
    except ConfigError as e:
        print(f"qubolin: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

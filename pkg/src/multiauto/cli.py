"""Command line entry point: ``multiauto run|catalogue|version``.

Exit codes: 0 all asserted verdicts pass, 1 verdict failure,
2 configuration error, 3 numerical instability.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import ConfigError, MultiautoError, NumericalInstability

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunManifest:
    config_hash: str
    version: str
    started: str
    finished: str
    files: list = field(default_factory=list)  # [{"name", "bytes", "sha256"}]
    verdict: str = "fail"

    def to_json(self) -> dict:
        return {"config_hash": self.config_hash, "version": self.version, "started": self.started,
                "finished": self.finished, "files": list(self.files), "verdict": self.verdict}

    def verify(self, out_dir: Path) -> list[str]:
        """Names of listed files that are missing or have the wrong length."""
        bad = []
        for entry in self.files:
            p = Path(out_dir) / entry["name"]
            if not p.is_file() or p.stat().st_size != entry["bytes"]:
                bad.append(entry["name"])
        return bad


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _check_threads() -> None:
    raw = os.environ.get("MULTIAUTO_THREADS")
    if raw is None:
        return
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"MULTIAUTO_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"MULTIAUTO_THREADS must be a positive integer, got {raw!r}")


def write_outputs(out_dir: Path, artifacts: dict) -> list[dict]:
    """Write ``name -> text`` artifacts in name order; returns manifest entries."""
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(artifacts):
        data = artifacts[name].encode()
        (out_dir / name).write_bytes(data)
        entries.append({"name": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})
    return entries


def run(config_path, out=sys.stdout, err=sys.stderr) -> int:
    from .config import load_config
    from .runner import execute
    started = _now()
    try:
        _check_threads()
        cfg = load_config(config_path)
        result = execute(cfg)
    except ConfigError as exc:
        print(f"{type(exc).__name__}: {exc} [config {config_path}]", file=err)
        return EXIT_CONFIG
    except NumericalInstability as exc:
        print(f"{type(exc).__name__}: {exc} [config {config_path}]", file=err)
        return EXIT_NUMERIC
    except MultiautoError as exc:
        print(f"{type(exc).__name__}: {exc} [config {config_path}]", file=err)
        return EXIT_VERDICT
    out_dir = cfg.output_dir()
    artifacts = {"verdict.json": json.dumps(result.result, indent=2, sort_keys=True) + "\n"}
    artifacts.update(result.csv)
    try:
        files = write_outputs(out_dir, artifacts)
        manifest = RunManifest(cfg.digest(), __version__, started, _now(), files,
                               "pass" if result.passed else "fail")
        (out_dir / "manifest.json").write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"ConfigError: cannot write outputs to {out_dir}: {exc} [config {config_path}]", file=err)
        return EXIT_CONFIG
    status = "PASS" if result.passed else "FAIL"
    print(f"{status} {cfg.kind} ({config_path}) -> {out_dir}", file=out)
    return EXIT_OK if result.passed else EXIT_VERDICT


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="multiauto", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_cat = sub.add_parser("catalogue", help="list built-in functions and kernels")
    p_cat.add_argument("filter", nargs="?", default="")
    sub.add_parser("version", help="print the toolkit version")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.command == "version":
        print(__version__)
        return EXIT_OK
    if args.command == "catalogue":
        from .catalogue import list_catalogue
        print(list_catalogue(args.filter))
        return EXIT_OK
    return run(args.config)


if __name__ == "__main__":
    sys.exit(main())

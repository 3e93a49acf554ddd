"""Shared helpers for the experiment scripts."""

import argparse
import dataclasses
import json
import time


def parser(description: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--seed", type=int, default=0)
    return p


def emit(name: str, result, started: float, **extra) -> None:
    d = dataclasses.asdict(result)
    d.pop("log_text", None)
    for attr in ("ratio", "holds", "improvement"):
        if hasattr(result, attr):
            d[attr] = getattr(result, attr)
    print(json.dumps({"experiment": name, **d, **extra, "seconds": round(time.perf_counter() - started, 1)},
                     indent=1))

"""``python -m retinet``; applies ``--threads`` before numpy loads its BLAS."""

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads(argv) -> None:
    for i, a in enumerate(argv):
        value = a.split("=", 1)[1] if a.startswith("--threads=") else (
            argv[i + 1] if a == "--threads" and i + 1 < len(argv) else None)
        if value and value.isdigit() and int(value) > 0:
            for var in _THREAD_VARS:
                os.environ[var] = value


def main() -> int:
    _apply_threads(sys.argv[1:])
    from .cli import main as cli_main
    return cli_main()


if __name__ == "__main__":
    sys.exit(main())

"""Run every acceptance criterion and print one PASS/FAIL line each."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import test_acceptance  # noqa: E402

if __name__ == "__main__":
    results = [c() for c in test_acceptance.CRITERIA]
    sys.exit(0 if all(ok for ok, _ in results) else 1)

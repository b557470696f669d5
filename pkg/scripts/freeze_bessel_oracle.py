"""Regenerate tests/data/bessel_zeros_oracle.json from the bisection oracle.

Slow (a few minutes); the frozen file is what the test-suite reads.
"""

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from oracles import oracle_zeros  # noqa: E402


def main():
    table = {str(m): oracle_zeros(m, 30) for m in range(11)}
    out = ROOT / "tests" / "data" / "bessel_zeros_oracle.json"
    out.write_text(json.dumps({"orders": list(range(11)), "count": 30, "zeros": table}, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()

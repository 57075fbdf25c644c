#!/usr/bin/env python3
"""Run the shipped desk-scale benchmark sweep: every config in configs/.

Equivalent to `fcco bench configs/`; kept as a script so the sweep is one
command after a fresh checkout.
"""

import sys
from pathlib import Path

from fcco.cli import cmd_bench

if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "configs"
    sys.exit(cmd_bench(target))

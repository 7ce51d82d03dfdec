"""Rewrite the CLI golden files.  Run from the repository root after an intended output change."""
from pathlib import Path

from test_cli import GOLDEN_CASES, run_cli

if __name__ == "__main__":
    for name, argv in GOLDEN_CASES.items():
        code, out, _ = run_cli(argv)
        assert code == 0, (name, code)
        Path(__file__).parent.joinpath("data", "golden", name).write_text(out, encoding="utf-8")
        print("wrote", name)

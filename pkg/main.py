"""
Main entry point for running the toolkit from an editable install.

Equivalent to the installed ``gso`` command:

    python main.py eval --model runs/bench/model.gsm --data runs/bench/data \\
        --out runs/bench/report
"""

import sys

from grad_subspace_ood.cli import main

if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

"""Allow ``python -m grad_subspace_ood``."""

import sys

from grad_subspace_ood.cli import main

if __name__ == "__main__":
    sys.exit(main())

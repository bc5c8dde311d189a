"""Module entry point: python -m l0spline <subcommand> ..."""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())

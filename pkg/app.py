"""Command-line entry point: ``python app.py <subcommand> [options]``."""

import sys

from trpcsim.cli import main

if __name__ == "__main__":
    sys.exit(main())

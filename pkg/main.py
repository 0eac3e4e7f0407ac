#!/usr/bin/env python3
"""Main entry point for the DeepRacing testbed command line."""

import sys

from src.deepracing.cli import main

if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Convenience script to run covert-uav from a source checkout."""

import sys

from src.covert_uav.main import main

if __name__ == "__main__":
    sys.exit(main())

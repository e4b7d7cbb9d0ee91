#!/usr/bin/env python3
"""
Launch script for the fart command line
"""

import sys
import os

# Add the project root to Python path
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, project_root)

from src.cli import cli_main


if __name__ == "__main__":
    sys.exit(cli_main(sys.argv[1:]))

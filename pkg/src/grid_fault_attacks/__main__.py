"""
Main entry point for running grid-fault-attacks as a module.
"""

import sys

from grid_fault_attacks.cli import main

if __name__ == "__main__":
    sys.exit(main())

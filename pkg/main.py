#!/usr/bin/env python3
"""
Truss Solver
Incomplete nested dissection for linear systems in 3-D truss stiffness matrices.
"""

import os
import sys

# Add the repository root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.cli.commands import main


if __name__ == '__main__':
    sys.exit(main())

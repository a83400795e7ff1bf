#!/usr/bin/env python3
"""
graph-pde - Main Entry Point
Solve, verify and reproduce elliptic problems on weighted directed graphs
"""

import sys
import os

# Add src to path
sys.path.append(os.path.join(os.path.dirname(__file__), 'src'))

from graph_pde.cli import main

if __name__ == "__main__":
    sys.exit(main())

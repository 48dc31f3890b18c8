"""
Command-line entry point for the analysis.
Reads an analysis config and writes the report and CSV files.
"""
import sys

from bifurcata.cli import main

if __name__ == "__main__":
    sys.exit(main())

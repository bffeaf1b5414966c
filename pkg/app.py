"""
Parametric Resonance Simulator
Command-line application

Runs frequency spectra, modulation-time and depth sweeps and single-shot
images of a cold 87Rb cloud in an intensity-modulated dipole trap.

    python app.py validate --config config/co2_trap_config.json
    python app.py spectrum --config config/co2_trap_config.json --out results --workers 8
"""

import sys
from pathlib import Path

# Make the src package importable when run from a checkout
sys.path.insert(0, str(Path(__file__).parent))

from src.cli import cli_main


if __name__ == "__main__":
    sys.exit(cli_main(sys.argv[1:]))

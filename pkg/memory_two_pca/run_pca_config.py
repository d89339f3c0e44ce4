"""
kernel JSON files are passed with --kernel, see kernel_files/README.md

Linux Python 3.10
$ python3.10 ./run_pca.py check --kernel ./kernel_files/example_binary_r.json --cond R
$ python3.10 ./run_pca.py ergodicity --kernel ./kernel_files/eight_vertex_q9_r2.json --half-width 2 --steps 50

Sampling commands need --seed, docx reports go in the final_report directory
"""

# written into every report header
PACKAGE_VERSION = "0.1.0"

# chi-square significance before the Bonferroni split
SIGNIFICANCE = 0.01

# largest ergodicity chain, n ** (2k+1) configurations
STATE_LIMIT = 2_000_000

# space-time windows
DEFAULT_WIDTH = 200
DEFAULT_HEIGHT = 200
DEFAULT_SAMPLES = 20

# rotated marginal depth
DEFAULT_DEPTH = 2

# directed animals density run
ANIMALS_BURN_IN = 200
ANIMALS_BLOCKS = 10

# TASEP runs
TASEP_PARTICLES = 1000
TASEP_STEPS = 1000

REPORT_DIR = "final_report"

TROUBLESHOOT_MODE = False

"""
pointseg - Main entry point.

Proposal-free point cloud instance segmentation: synthesize scenes, train the
embedding network, cluster embeddings into instances and score the results.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "src"))

from pointseg.cli import run  # noqa: E402

if __name__ == "__main__":
    sys.exit(run())

import math
import subprocess
import sys
from pathlib import Path

import pytest
import torch

from ldp_freq.mechanisms import hpg, pg

LN2 = math.log(2)
LN5 = math.log(5)
ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(1234)


@pytest.fixture
def fano():
    """pg over the Fano plane: q=2, t=3, eps=ln 2, seven inputs."""
    return pg.derive_params(LN2, 7, q=2)


@pytest.fixture
def small_hpg():
    """hpg with q=2, t=3, h=2 at eps=ln 5, so h*z = e^eps + 1."""
    return hpg.derive_params(LN5, 14, 2, t=3)


@pytest.fixture
def peak_rss_mb():
    """Runs a script in a fresh interpreter and returns the peak resident size of child processes in MB."""
    resource = pytest.importorskip("resource")
    if not sys.platform.startswith("linux"):
        pytest.skip("ru_maxrss is reported in kilobytes only on Linux")

    def run(script: str) -> float:
        subprocess.run([sys.executable, "-c", script], cwd=ROOT, check=True)
        return resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss / 1024

    return run

import subprocess
import sys
from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


def test_benchmark_runs_for_every_backend():
    from reslab._backend import available_backends

    out = subprocess.run([sys.executable, str(BENCH), "--repeat", "1"], capture_output=True,
                         text=True, check=True).stdout
    header = out.splitlines()[0]
    for name in available_backends():
        assert name in header
    assert "fit_resonance" in out

import json
import subprocess
import sys
from pathlib import Path

import pytest

from hirpf.numerics import kernels

BENCH = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")
def test_benchmark_smoke(tmp_path):
    out = tmp_path / "t.json"
    r = subprocess.run([sys.executable, str(BENCH), "--repeat", "1", "--skip-step", "--json", str(out)],
                       capture_output=True, text=True, timeout=300)
    assert r.returncode == 0, r.stderr
    data = json.loads(out.read_text())
    rows = {r["kernel"]: r for r in data["rows"]}
    assert len(rows) == 8 and data["dtype"] == "float32"
    assert all(r["python_ms"] > 0 and r["cython_ms"] > 0 for r in rows.values())

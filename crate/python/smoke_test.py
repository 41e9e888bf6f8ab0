"""Smoke test for the `tbnn` extension module.

Build first:
    cargo build --release -p tbnn-python --features extension-module
then run `python3 python/smoke_test.py` from the repository root.
"""

import json
import math
import os
import shutil
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_tbnn():
    try:
        import tbnn  # installed or already on the path
        return tbnn
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = os.path.join(ROOT, "target", profile, "libtbnn.so")
        if os.path.exists(lib):
            tmp = tempfile.mkdtemp()
            shutil.copy(lib, os.path.join(tmp, "tbnn.so"))
            sys.path.insert(0, tmp)
            import tbnn
            return tbnn
    sys.exit("libtbnn.so not found; build the tbnn-python crate first")


def main():
    tbnn = import_tbnn()

    cloud, field = tbnn.sample_torus_field(100.0, seed=3)
    assert len(cloud) == len(field) > 0
    for (x, y, z) in cloud.points():
        assert abs((math.hypot(x, y) - 0.3) ** 2 + z * z - 0.01) < 1e-12

    sheaf = tbnn.Sheaf.build(cloud, eps_n=0.5, eps_pca=0.8, d_hat=2)
    assert sheaf.d_hat == 2 and sheaf.node_count == len(cloud)
    orth, anti = sheaf.transport_errors()
    assert orth < 1e-10 and anti < 1e-10

    lam = sheaf.eigenvalues(6)
    assert lam == sorted(lam) and lam[0] >= 0.0

    f = sheaf.sample_signal(field)
    assert len(f) == 2 * len(cloud)
    assert sheaf.filter([1.0], f) == f

    same = tbnn.Sheaf.from_json(sheaf.to_json())
    assert same.eigenvalues(6) == lam

    h = tbnn.frequency_response([1.0, 0.5], [0.0, 1.0])
    assert abs(h[0] - 1.5) < 1e-15 and abs(h[1] - (1.0 + 0.5 * math.exp(-1.0))) < 1e-15

    net = tbnn.Tnn([1, 8, 4, 1], k=2, seed=0)
    out = net.predict(sheaf, [[v] for v in f])
    assert len(out) == len(f) and len(out[0]) == 1
    assert tbnn.Tnn.from_json(net.to_json()).predict(sheaf, [[v] for v in f]) == out

    report = json.loads(tbnn.run("converge", "converge_ns = 60,120\nconverge_eps = 0.5,0.35", seeds="0..1"))
    assert report["kind"] == "converge" and len(report["runs"]) == 2

    try:
        tbnn.run("nonsense")
    except ValueError as e:
        assert "denoise-torus" in str(e)
    else:
        raise AssertionError("unknown kind accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()

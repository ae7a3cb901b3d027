#!/usr/bin/env python3
"""Smoke test for the spqt Python extension.

Build the module first, then run this script:

    cargo build -p spqt-py --release
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_spqt():
    """Copies the built cdylib next to a temp dir as spqt.so and imports it."""
    candidates = [
        os.path.join(REPO, "target", profile, name)
        for profile in ("release", "debug")
        for name in ("libspqt.so", "libspqt.dylib", "spqt.dll")
    ]
    built = next((c for c in candidates if os.path.exists(c)), None)
    if built is None:
        sys.exit(
            "spqt extension not found; run `cargo build -p spqt-py --release` first"
        )
    stage = tempfile.mkdtemp(prefix="spqt-py-")
    suffix = ".pyd" if built.endswith(".dll") else ".so"
    shutil.copyfile(built, os.path.join(stage, "spqt" + suffix))
    sys.path.insert(0, stage)
    import spqt  # noqa: E402

    return spqt


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol * max(1.0, abs(b)), f"{a} != {b} (tol {tol})"


def main():
    spqt = import_spqt()
    print(f"spqt {spqt.__version__}")

    # Zipf probabilities: V=3, alpha=2 -> (36, 9, 4)/49.
    p = spqt.zipf_probabilities(3, 2.0)
    approx(p[0], 36.0 / 49.0)
    approx(p[1], 9.0 / 49.0)
    approx(p[2], 4.0 / 49.0)
    print("zipf_probabilities ok")

    # Global int4 quantization of the hand example.
    m = spqt.Matrix([[7.0, -3.5], [0.0, 1.0]])
    q = spqt.quantize(m, preset="int4")
    assert q["matrix"].to_rows() == [[7.0, -4.0], [0.0, 1.0]]
    assert q["error"].to_rows() == [[0.0, -0.5], [0.0, 0.0]]
    print("quantize ok")

    # E2M1 grid shape.
    grid = spqt.e2m1_grid()
    assert len(grid) == 17 and grid[0] == -6.0 and grid[-1] == 6.0
    print("e2m1_grid ok")

    # Spectrum of diag(3, 1) and the stable-rank identity.
    sigma = spqt.singular_values(spqt.Matrix([[3.0, 0.0], [0.0, 1.0]]))
    approx(sigma[0], 3.0)
    approx(sigma[1], 1.0)
    approx(spqt.stable_rank(sigma), 10.0 / 9.0)
    approx(1.0 / spqt.energy_concentration(sigma, 1), spqt.stable_rank(sigma))
    print("spectral metrics ok")

    # Closed-form RMT values.
    approx(spqt.mp_bulk_edge(0.5, 0.25), 1.125)
    approx(spqt.bbp_map(2.0, 0.5, 0.25), 2.0 * (1.0 + 0.125 / 1.5))
    re, im = spqt.stieltjes_discrete([1.0, 3.0], 0.0, 1.0)
    approx(re, 0.4)
    approx(im, 0.3)
    nu2 = spqt.noise_level(1.0, 2.0, 2, 5)
    approx(nu2, (1.0 / 9.0 + 1.0 / 16.0 + 1.0 / 25.0) / 3.0)
    print("rmt formulas ok")

    # Bernstein bound and its inverse round-trip.
    bound = spqt.bernstein_tail_bound(256, 256, 0.05, 2.0)
    t = spqt.invert_tail_bound(256, 256, 0.05, bound)
    approx(t, 2.0, tol=1e-9)
    print("bernstein round-trip ok")

    # Quantization raises the stable rank of a power-law matrix.
    a = spqt.power_law_matrix(96, 1.0, 2.0, seed=42)
    sr_before = spqt.stable_rank(spqt.singular_values(a))
    q = spqt.quantize(a, preset="nvfp4")
    sr_after = spqt.stable_rank(spqt.singular_values(q["matrix"]))
    assert sr_after > sr_before, f"stable rank {sr_before} -> {sr_after}"
    print(f"stable rank increases: {sr_before:.4f} -> {sr_after:.4f}")

    # Weyl gap bounded by the error spectral norm.
    gap = spqt.weyl_gap(
        spqt.singular_values(a), spqt.singular_values(q["matrix"])
    )
    e_norm = spqt.singular_values(q["error"])[0]
    assert gap <= e_norm * (1 + 1e-12), f"weyl gap {gap} > {e_norm}"
    print("weyl inequality ok")

    # File round-trip through a temp dir.
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "a.spqt")
        a.save(path)
        back = spqt.Matrix.load(path)
        assert back.to_rows() == a.to_rows()
    print("save/load ok")

    # A quick protocol run at tiny scale.
    cfg = (
        '{"ensemble": {"V": 64, "alpha": 2.0, "d": 96, "N": 128, "seed": 0},'
        ' "trials": 3, "seed": 5}'
    )
    summaries = spqt.run_verification("unbias", cfg)
    assert len(summaries) == 1 and '"protocol": "unbias"' in summaries[0]
    print("run_verification ok")

    # Power-law fit recovers an exact profile.
    sigma = [3.0 * k ** -0.75 for k in range(1, 21)]
    mu, decay, r2 = spqt.fit_power_law(sigma, 1, 20)
    approx(mu, 3.0)
    approx(decay, 0.75)
    approx(r2, 1.0)
    print("fit_power_law ok")

    print("all smoke tests passed")


if __name__ == "__main__":
    main()

"""Smoke test for the pycrloc extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pycrloc-*.whl
"""

import math
import os
import sys
import tempfile

import pycrloc


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    good = True
    center = (89.5 + 0.3, 89.5 - 0.2)

    img, truth = pycrloc.render_scene(8.0, 1000.0, center, size=180, sigma_n=2.0, edge=0.5, seed=3)
    good &= check("render", img.width == 180 and len(img.levels()) == 180 * 180, repr(img))
    good &= check("truth", truth == center)

    # Intensity center of mass is only meaningful on a black background.
    black, _ = pycrloc.render_scene(8.0, 1000.0, center, size=180, sigma_n=2.0, seed=3)
    for method, scene in [("threshold", img), ("radial_symmetry", img), ("intensity_com", black)]:
        x, y = pycrloc.localize(scene, method)
        err = math.hypot(x - truth[0], y - truth[1])
        good &= check(f"localize {method}", err < 1.5, f"{err:.3f} px")

    try:
        pycrloc.localize(img, "cnn")
        good &= check("cnn without model rejected", False)
    except ValueError:
        good &= check("cnn without model rejected", True)

    model = pycrloc.Model("desk", seed=1)
    series = model.train(1, epochs=2, samples_per_epoch=32, validation_size=16, seed=1)
    good &= check("train", len(series) == 3 and all(math.isfinite(v) for v in series), str(series))
    x, y = model.locate(img)
    good &= check("cnn locate", math.isfinite(x) and math.isfinite(y), f"({x:.2f}, {y:.2f})")

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.crcnn")
        model.save(path)
        again = pycrloc.Model.load(path)
        good &= check("model round trip", again.locate(img) == (x, y) and again.parameter_count == model.parameter_count)
    try:
        pycrloc.Model.load("/nonexistent/m.crcnn")
        good &= check("missing model", False)
    except FileNotFoundError:
        good &= check("missing model", True)

    scenes = pycrloc.sample_scenes(2, 4, size=64, seed=5)
    good &= check("sample scenes", len(scenes) == 4 and scenes[0][0].width == 64)

    jitter = [((i % 2) * 1.0, 0.0) for i in range(500)]
    good &= check("rms_s2s", pycrloc.rms_s2s(jitter, 500.0) == 1.0)
    good &= check("std", abs(pycrloc.std_precision(jitter, 500.0) - 0.5) < 0.01)

    grid = [(x, y) for y in (-1.0, 0.0, 1.0) for x in (-1.0, 0.0, 1.0)]
    targets = [(2 * x + 1, -y + 0.5 * x * y) for x, y in grid]
    cal = pycrloc.Calibration.fit(grid, targets)
    back = cal.apply(grid)
    worst = max(math.hypot(a - c, b - d) for (a, b), (c, d) in zip(back, targets))
    good &= check("calibration", cal.residual_rms < 1e-9 and worst < 1e-9, f"{cal.residual_rms:.1e}")

    pipe = pycrloc.Pipeline("radial_symmetry")
    res = pipe.process(img)
    good &= check("pipeline", set(res) == {"pupil", "cr", "cr_refined", "flags"}, str(res))

    print("smoke test", "passed" if good else "FAILED", f"(pycrloc {pycrloc.__version__})")
    return 0 if good else 1


if __name__ == "__main__":
    sys.exit(main())

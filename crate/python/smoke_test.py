"""Smoke test for the lesionseg_py extension module.

Build and install first:
    pip install --no-build-isolation ./crates/python
"""

import math
import os
import subprocess
import sys
import tempfile

import lesionseg_py as ls


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    assert ls.parameter_count() == 5039457
    assert ls.parameter_count(4) < ls.parameter_count()

    ac, di, ja, se, sp = ls.metrics_from_counts(50, 40, 5, 5)
    assert close(ac, 0.9) and close(ja, 50 / 60) and close(di, 100 / 110)
    assert close(se, 50 / 55) and close(sp, 40 / 45)
    assert close(di, 2 * ja / (1 + ja))

    truth = [[x >= 2 for x in range(6)] for _ in range(4)]
    assert ls.mask_metrics(truth, truth) == (1.0, 1.0, 1.0, 1.0, 1.0)

    h, s, v = ls.rgb_to_hsv(1.0, 0.0, 0.0)
    assert (h, s, v) == (0.0, 1.0, 1.0)
    assert close(ls.lab_lightness(0.5, 0.5, 0.5), 53.389, 1e-3)

    assert close(ls.jaccard_loss([1.0, 0.0], [1.0, 0.0], smooth=0.0), 0.0)
    folds = ls.kfold_split(10, 5, 0)
    assert sorted(i for _, val in folds for i in val) == list(range(10))

    prob = [[0.0] * 20 for _ in range(20)]
    for y in range(5, 12):
        for x in range(5, 12):
            prob[y][x] = 0.9
    prob[8][8] = 0.3
    assert ls.tumor_center(prob) == (8, 8)
    mask = ls.dual_threshold_mask(prob)
    assert sum(map(sum, mask)) == 49
    assert not any(map(any, ls.dual_threshold_mask([[0.0] * 5] * 5)))

    try:
        ls.dual_threshold_mask(prob, th_high=0.4, th_low=0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("inverted thresholds accepted")

    binary = os.environ.get("LESIONSEG_BIN")
    if binary:
        ensemble_check(binary)
    print("smoke test passed")


def ensemble_check(binary):
    """Trains a tiny model with the CLI on a folder of PNGs and segments one."""
    from PIL import Image, ImageDraw

    with tempfile.TemporaryDirectory() as tmp:
        data = os.path.join(tmp, "data")
        os.makedirs(data)
        for i in range(2):
            img = Image.new("RGB", (64, 48), (200, 170, 150))
            msk = Image.new("L", (64, 48), 0)
            box = (16 + 4 * i, 12, 44 + 4 * i, 36)
            ImageDraw.Draw(img).ellipse(box, fill=(90, 50, 40))
            ImageDraw.Draw(msk).ellipse(box, fill=255)
            img.save(os.path.join(data, f"img_{i}.png"))
            msk.save(os.path.join(data, f"img_{i}_segmentation.png"))
        out = os.path.join(tmp, "run")
        subprocess.run(
            [binary, "train", "--data", data, "--out", out, "--deterministic",
             "--set", "model.width_divisor=16", "--set", "train.batch_size=2", "--set", "train.epochs=1"],
            check=True,
            stdout=subprocess.DEVNULL,
        )
        ens = ls.Ensemble([os.path.join(out, "model.weights")])
        assert len(ens) == 1
        probs = ens.probability_map(os.path.join(data, "img_0.png"))
        assert len(probs) == 192 and len(probs[0]) == 256
        assert all(0.0 < p < 1.0 and not math.isnan(p) for row in probs for p in row)
        seg = ens.segment(os.path.join(data, "img_0.png"))
        assert len(seg) == 48 and len(seg[0]) == 64


if __name__ == "__main__":
    sys.exit(main())

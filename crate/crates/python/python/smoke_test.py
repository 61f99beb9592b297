"""Smoke test for the panmix_py extension module."""

import json
import math

import panmix_py as pm


def main():
    runs = pm.rle_encode([False, True, True, False], 2, 2)
    assert runs == [1, 2, 1], runs
    assert pm.rle_decode(runs, 2, 2) == [False, True, True, False]

    assert pm.ema_update([0.0, 1.0], [1.0, 1.0], 1.0) == [0.0, 1.0]
    assert pm.ema_update([0.0, 1.0], [1.0, 1.0], 0.0) == [1.0, 1.0]

    loss = pm.cda_loss([0.3] * 8, 2, 2, 2, [0, 1, 0, pm.IGNORE])
    assert math.isclose(loss, math.log(2) / 2, abs_tol=1e-12), loss

    image, png, sidecar = pm.generate_scene(7, height=24, width=24)
    assert image[:8] == b"\x89PNG\r\n\x1a\n"
    assert json.loads(sidecar)["height"] == 24
    again = pm.generate_scene(7, height=24, width=24)
    assert again == (image, png, sidecar)

    q = pm.panoptic_quality_png(png, sidecar, png, sidecar, "lab")
    assert q["mpq"] == 1.0, q

    try:
        pm.ema_update([0.0], [1.0, 2.0], 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("length mismatch accepted")
    print("panmix_py smoke test passed")


if __name__ == "__main__":
    main()

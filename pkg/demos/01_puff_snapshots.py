"""A single cough in a steady breeze.

40 000 aerosols are released 1.7 m above the floor into a 1 m/s wind with
eddy diffusivity 0.03 m^2/s. We look at the x-y plane through the release
height at 50, 200, 400 and 800 ms. The cloud drifts downwind at the wind
speed, widens like sqrt(2 K t) and its peak falls as t^(-3/2).

Each snapshot is written as a PGM heatmap (scaled to its own maximum) next
to this script, or into the directory given as the first argument.
"""

import math
import sys
from pathlib import Path

import numpy as np

from breathlink import Impulse, MediumParams, SourceSpec, field_snapshot
from breathlink.fields import GridSpec
from breathlink.io import field_heatmap, write_pgm

H = 1.7


def main(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    med = MediumParams(wind_u=1.0, diffusivity_K=0.03)
    cough = SourceSpec(Impulse(40000.0), height_H=H)
    grid = GridSpec.plane((-0.3, 2.2, 0.005), (-1.2, 1.2, 0.005), H)

    print(f"{'t [ms]':>7} {'peak x':>8} {'peak C [1/m^3]':>15} {'ratio':>8} {'sigma_y':>8}")
    first = None
    for t in (0.05, 0.2, 0.4, 0.8):
        snap = field_snapshot(cough, med, grid, t)
        value, (x, _, _) = snap.peak()
        first = first or value
        lateral = snap.values[:, :, 0].sum(axis=0)
        sig = math.sqrt(np.sum(lateral * grid.y**2) / lateral.sum())
        print(f"{t * 1e3:7.0f} {x:8.3f} {value:15.4e} {value / first:8.5f} {sig:8.4f}")
        write_pgm(out / f"cough_{int(t * 1e3):03d}ms.pgm", field_heatmap(snap))

    print("\nexpected sigma_y:", ", ".join(f"{math.sqrt(0.06 * t):.4f}" for t in (0.05, 0.2, 0.4, 0.8)))
    print("expected ratios: 1, 1/8, 1/22.6, 1/64")
    print(f"heatmaps in {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("out"))

"""Where does the skeletal term live?

Two sampled unit fields in 2D, mollified at shrinking widths:

* a slab, n = sign(y) e_y, whose jump across y = 0 should carry the
  line density 2/3;
* the inward radial field -x/|x|, a point singularity, where the
  pairing decays like sigma times a fixed constant.

Run:  python demos/skeleton_probes.py
"""

import warnings

import numpy as np

from skelflow.grid import make_grid
from skelflow.skeleton import skeletal_pairing

RADIAL_CONSTANT = -1.94964  # -int g^2 g', see tests/test_skeleton.py


def bump(half_width):
    def phi(x, y):
        return (np.where(np.abs(x) < half_width, np.cos(np.pi * x / (2 * half_width)) ** 2, 0.0)
                * np.where(np.abs(y) < half_width, np.cos(np.pi * y / (2 * half_width)) ** 2, 0.0))
    return phi


def slab():
    g = make_grid((128, 128))
    _, y = g.mesh(sparse=False)
    n = np.zeros((2,) + g.dims)
    n[1] = np.where(y >= 0, 1.0, -1.0)
    target = 2 / 3 * 0.2  # the bump integrates to 0.2 along y = 0
    print("slab: <S n_sigma, phi> against 2/3 * int phi ds =", round(target, 5))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for sigma in (0.02, 0.01, 0.005):
            v = skeletal_pairing(g, n, sigma, bump(0.2), refine=8)
            print(f"  sigma={sigma:<6} pairing={v:.5f}  rel err={abs(v - target) / target:.4f}")


def point():
    g = make_grid((256, 256))
    x, y = g.mesh(sparse=False)
    r = np.hypot(x, y)
    n = -np.stack([x / r, y / r])

    def phi(x, y):
        rr = np.hypot(x, y)
        return np.where(rr < 0.2, np.cos(np.pi * rr / 0.4) ** 2, 0.0)

    print(f"point: sigma^-1 <S n_sigma, phi> should approach {RADIAL_CONSTANT} * phi(0)")
    for sigma in (0.04, 0.02, 0.01):
        print(f"  sigma={sigma:<6} scaled pairing={skeletal_pairing(g, n, sigma, phi) / sigma:.4f}")


if __name__ == "__main__":
    slab()
    point()

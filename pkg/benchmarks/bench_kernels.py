"""Time the codec kernels under the numba and numpy backends.

Each backend runs in its own interpreter because the choice is fixed at import
time by ``JPEGRESTORE_NUMBA``. Usage::

    python benchmarks/bench_kernels.py [--images 16] [--repeat 3]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from jpegrestore import codec, samples
from jpegrestore._accel import BACKEND
from jpegrestore.codec import blocks

n, repeat = int(sys.argv[1]), int(sys.argv[2])
imgs = samples.natural_crops(n, seed=0)
stack = np.concatenate([blocks.to_blocks(codec.rgb_to_ycbcr(im)[..., 0].astype(float)).reshape(-1, 8, 8)
                        for im in imgs])
streams = [codec.compress(im, 50) for im in imgs]   # also warms up the jit

def best(fn):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

out = {
    "colour": best(lambda: [codec.ycbcr_to_rgb(codec.rgb_to_ycbcr(im)) for im in imgs]),
    "dct+idct": best(lambda: codec.idct_2d(codec.dct_2d(stack))),
    "compress": best(lambda: [codec.compress(im, 50) for im in imgs]),
    "decompress": best(lambda: [codec.decompress(bs) for bs in streams]),
}
print(json.dumps({"backend": BACKEND, "times": out}))
"""


def run(flag, images, repeat):
    env = dict(os.environ, JPEGRESTORE_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", WORKER, str(images), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--images", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    nb = run("1", args.images, args.repeat)
    npy = run("0", args.images, args.repeat)
    print(f"{args.images} images of 128x128, best of {args.repeat}")
    print(f"{'kernel':<12} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for k, t_nb in nb["times"].items():
        t_np = npy["times"][k]
        print(f"{k:<12} {1e3 * t_nb:>10.2f} {1e3 * t_np:>10.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()

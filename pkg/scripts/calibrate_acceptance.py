"""One-off calibration of the empirical acceptance thresholds.

Runs the three training-dependent checks at the exact sizes the acceptance
suite uses and prints the measured numbers, so thresholds are frozen from
evidence rather than hope. Not part of the test suite.
"""

import time

import numpy as np

from n2l.autodiff import Tensor
from n2l.imageio import load_image
from n2l.model import get_setting
from n2l.training import TrainConfig, overfit


def synthetic_gradient(h=64, w=64):
    ys = np.linspace(0.0, 1.0, h)[:, None]
    xs = np.linspace(0.0, 1.0, w)[None, :]
    r = np.broadcast_to(xs, (h, w))
    g = np.broadcast_to(ys, (h, w))
    b = 0.5 * (xs + ys)
    return Tensor(np.stack([r, g, b])[None])


def main():
    config = get_setting(0)
    natural = load_image("tests/data/natural_64.png")

    t0 = time.perf_counter()
    _, rep = overfit(synthetic_gradient(), config, TrainConfig(steps=2000), seed=0)
    print(f"synthetic gradient, 2000 steps: {rep.final_psnr_db:.2f} dB "
          f"({time.perf_counter() - t0:.0f}s)", flush=True)

    _, rep = overfit(natural, config, TrainConfig(steps=1001, eval_every=100), seed=0)
    by_step = {p.step: p.mse for p in rep.points}
    print(f"natural crop loss: step 0 {by_step[0]:.6f} -> step1000 {by_step[1000]:.6f}",
          flush=True)

    finals = []
    for seed in range(5):
        _, rep = overfit(natural, config, TrainConfig(steps=400, eval_every=100), seed=seed)
        finals.append(rep.final_psnr_db)
        print(f"seed {seed}: {rep.final_psnr_db:.3f} dB", flush=True)
    print(f"spread over 5 seeds at 400 steps: {max(finals) - min(finals):.3f} dB",
          flush=True)

    for steps in (600,):
        _, rep_full = overfit(natural, config, TrainConfig(steps=steps), seed=0)
        _, rep_direct = overfit(natural, config, TrainConfig(steps=steps), seed=0, no_gpp=True)
        print(f"matched-steps ablation ({steps}): full {rep_full.final_psnr_db:.3f} dB, "
              f"no-gpp {rep_direct.final_psnr_db:.3f} dB, "
              f"delta {rep_full.final_psnr_db - rep_direct.final_psnr_db:+.3f} dB",
          flush=True)


if __name__ == "__main__":
    main()

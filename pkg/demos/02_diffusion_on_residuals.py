"""
Why the residual gets scaled before diffusion
=============================================

The cosine schedule, how fast it buries a small residual, and a sanity run
of the reverse chain with a noise predictor that knows the answer.

Run from the repo root:  python3 demos/02_diffusion_on_residuals.py
"""

import numpy as np

from lfdiff.diffusion import cosine_schedule, oracle_eps_model, sample
from lfdiff.lightfield import degrade, upsample
from lfdiff.pipeline import mixed_corpus

sched = cosine_schedule(100)
print("T =", sched.T, " abar_T =", f"{sched.abar[-1]:.2e}", " last alpha =", f"{sched.alpha[-1]:.3f}")
# 1/sqrt(alpha_T) is how much the first reverse step scales its input; the x0 implied
# by an eps estimate at t = T carries that error times sqrt((1 - abar)/abar)
print("first reverse step gain:", f"{1 / np.sqrt(sched.alpha[-1]):.1f}")
print("eps-to-x0 error gain at t = T:", f"{np.sqrt((1 - sched.abar[-1]) / sched.abar[-1]):.0f}")

# residual statistics on the toy corpus
hr = mixed_corpus(8, 32, seed=1000)
res = np.concatenate([(h.data - upsample(degrade(h, 2), 2).data).ravel() for h in hr])
sd = res.std()
print(f"\nHR - bicubic residual: std {sd:.4f}, range [{res.min():.3f}, {res.max():.3f}]")

# noise-to-signal ratio sqrt(1 - abar) / (sqrt(abar) * std) for raw and scaled residuals
print("\n   t   raw   x10")
for t in (1, 3, 10, 20, 50, 80):
    r = np.sqrt((1 - sched.abar[t]) / sched.abar[t]) / sd
    print(f"{t:4d} {r:6.2f} {r / 10:5.2f}")
# at scale 1 the residual is already below the noise floor after a handful of steps,
# so almost the whole chain is spent denoising pure noise

# with the true eps every step is exact: the chain lands on x0 from any start
rng = np.random.default_rng(0)
x0 = (10 * res[: 24 * 24]).reshape(1, 1, 24, 24).astype(np.float32)
out = sample(oracle_eps_model(x0, sched), None, sched, True, rng, shape=x0.shape)
print("\noracle chain, max |x0_hat - x0|:", float(np.abs(out - x0).max()))

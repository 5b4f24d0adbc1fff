"""
Light-field layouts and the four feature extractors
===================================================

A 3x3 light field rendered from two textured layers, its macro-pixel
relayout, an EPI, and what each extractor can and cannot see.

Run from the repo root:  python3 demos/01_light_field_layouts.py
"""

import numpy as np

from lfdiff.autodiff import Tensor
from lfdiff.disentangle import extractor_forward, extractor_out_extent
from lfdiff.lightfield import degrade, extract_epi_h, lf_to_macpi_array, macpi_array_to_lf
from lfdiff.pipeline import SyntheticSceneSpec, synth_scene

np.set_printoptions(precision=3, suppress=True, linewidth=110)

# a single textured layer at disparity 1: every view is the centre view shifted by one pixel per step
lf, depth = synth_scene(SyntheticSceneSpec(layers=1, disparities=[1.0], hr_extent=32, seed=4))
print("sub-aperture stack (U, V, H, W):", lf.shape)
print("disparity map is constant:", np.unique(depth))

# MacPI: pixel (h, w) of view (u, v) lands at (u + A*h, v + A*w)
A = lf.U
mac = lf_to_macpi_array(lf.data)
print("\nMacPI extent:", mac.shape)
print("top-left macro-pixel (all 9 views of spatial sample (0, 0)):")
print(mac[:A, :A])
print("same values read from the views:")
print(lf.data[:, :, 0, 0])
assert np.array_equal(macpi_array_to_lf(mac, A), lf.data)

# an EPI: fix v and w, stack the rows as u moves; depth shows up as slope
epi = extract_epi_h(lf, v=1, w=10)
print("\nEPI rows shift by the disparity as u steps:")
print(epi[:, 8:16])

# the extractors on a one-channel MacPI; impulse at one sample tells each receptive field
H, W = 6, 6
x = np.zeros((1, 1, A * H, A * W))
x[0, 0, A * 3 + 1, A * 3 + 1] = 1.0  # view (1, 1), spatial (3, 3)
for kind, k in [("SFE", (3, 3)), ("AFE", (3, 3)), ("EFE_H", (1, A * A)), ("EFE_V", (A * A, 1))]:
    w = np.ones((1, 1) + k)
    out = extractor_forward(kind, Tensor(x), A, Tensor(w)).data[0, 0]
    print(f"\n{kind}: output extent {out.shape} (predicted {extractor_out_extent(kind, A, H, W)}),"
          f" {int((out != 0).sum())} outputs touched")

# SFE spreads the impulse over its own view only (3x3 neighbours, 9 outputs);
# AFE folds it into the single output of its macro-pixel; the EPI extractors
# keep it on one EPI line
lr = degrade(lf, 2)
print("\nLR light field for 2x SR:", lr.shape)

"""Absorption in the initial waveguide: threshold and re-entrant transfer.

Here the dark state itself decays at the start of the device, and for long
devices the first drop of P below 0.5 follows (4/L) ln(L / (2 a e^{-3a/2}))
to within a few percent. Breakdown is confined to a band just above that
line. At larger gamma the normalized transfer probability climbs back to
about 1, so regions of complete transfer reappear above the boundary.
The depth of the breakdown band oscillates with L. Below L ~ 90 many columns
(L = 60 among them) never fall below P = 0.5 at all.

Run: python3 demos/initial_site_islands.py   (about thirty seconds on one core)
"""
import numpy as np
from scipy import ndimage

from _plot import figure
from wgstirap.analysis import NoCrossingError, gamma_cr_initial, threshold_from_column
from wgstirap.model import Site
from wgstirap.sweep import SweepSpec, run_sweep

spec = SweepSpec(a_values=(5.0,), L_range=(20.0, 120.0, 51), gamma_range=(0.0, 1.5, 151),
                 site=Site.INITIAL, error_estimate=False)
d = run_sweep(spec)
P, gs = d.P[0], d.gammas

print("   L   first crossing   formula    min P")
above = np.zeros_like(P, dtype=bool)
for li, L in enumerate(d.Ls):
    ref = gamma_cr_initial(5.0, L).gamma_cr
    try:
        g = threshold_from_column(gs, P[li]).gamma_cr
        above[li] = (P[li] > 0.9) & (gs > g)
        print(f"{L:5.0f}  {g:14.4f}  {ref:9.4f}  {P[li].min():7.3f}")
    except NoCrossingError:
        print(f"{L:5.0f}  {'none':>14}  {ref:9.4f}  {P[li].min():7.3f}")
_, n = ndimage.label(above)
print(f"\n{n} separate P > 0.9 regions above the first crossing")

plt, out = figure()
if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.pcolormesh(d.Ls, gs, P.T, shading="auto", cmap="viridis")
    ax.plot(d.Ls, [gamma_cr_initial(5.0, L).gamma_cr for L in d.Ls], "w--", label="formula")
    ax.set_ylim(gs[0], gs[-1])
    ax.set_xlabel("L")
    ax.set_ylabel("gamma")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(out / "initial_site_islands.png", dpi=120)
    print(f"wrote {out / 'initial_site_islands.png'}")

"""Sharp breakdown of transfer with absorption in the target waveguide.

A coarse (L, gamma) sweep shows P jumping from ~1 to ~0 across a line
gamma_cr(L). The extracted line is compared with the Landau-Zener and
semianalytic estimates. The Landau-Zener line sits about 0.06 above the
extracted one, the semianalytic line within 0.01. The 0.9 to 0.1 width
scales as 1/L, with width * L close to 3.9.

Run: python3 demos/target_threshold.py   (about ten seconds on one core)
"""
import numpy as np

from _plot import figure
from wgstirap.model import Site
from wgstirap.sweep import SweepSpec, extract_boundary, run_sweep

spec = SweepSpec(a_values=(5.0,), L_range=(10.0, 60.0, 26), gamma_range=(0.0, 0.6, 121),
                 site=Site.TARGET, error_estimate=False)
diagram = run_sweep(spec)
boundary = extract_boundary(diagram)

print("   L   numeric   width*L      LZ   semianalytic")
for p in boundary.points:
    lz = p.lz.gamma_cr if p.lz else np.nan
    semi = p.semianalytic.gamma_cr if p.semianalytic else np.nan
    print(f"{p.L:5.1f}  {p.numeric.gamma_cr:8.4f}  {p.numeric.width * p.L:8.3f}  {lz:7.4f}  {semi:10.4f}")
if boundary.omitted:
    print("no crossing at L =", boundary.omitted)

plt, out = figure()
if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.pcolormesh(diagram.Ls, diagram.gammas, diagram.P[0].T, shading="auto", cmap="viridis")
    Lb = [p.L for p in boundary.points]
    ax.plot(Lb, [p.numeric.gamma_cr for p in boundary.points], "r.", label="P = 0.5")
    ax.plot(Lb, [p.lz.gamma_cr if p.lz else np.nan for p in boundary.points], "w--", label="Landau-Zener")
    ax.plot(Lb, [p.semianalytic.gamma_cr if p.semianalytic else np.nan for p in boundary.points], "k-",
            label="semianalytic")
    ax.set_xlabel("L")
    ax.set_ylabel("gamma")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(out / "target_threshold.png", dpi=120)
    print(f"\nwrote {out / 'target_threshold.png'}")

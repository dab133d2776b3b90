"""Optional matplotlib helper shared by the demos."""
from pathlib import Path

OUT = Path(__file__).with_name("out")


def figure():
    """Return (plt, out_dir), or (None, None) when matplotlib is missing."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None, None
    OUT.mkdir(exist_ok=True)
    return plt, OUT

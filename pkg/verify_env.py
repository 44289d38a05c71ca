import numpy as np, scipy, pandas as pd, yaml
from fpdf import FPDF

print("[OK] numpy", np.__version__)
print("[OK] scipy", scipy.__version__)
print("[OK] pandas", pd.__version__)
print("[OK] PyYAML", yaml.__version__)
print("[OK] fpdf", getattr(FPDF, "__version__", "1.7.x"))

# Tiny double-well connection to confirm the solver stack works end to end
from potential import double_well
from heteroclinic import solve_connection

het = solve_connection(double_well(), [-1.0], [1.0], L=12.0, n=513, extrapolate=False)
err = float(np.max(np.abs(het.profile[:, 0] - np.tanh(het.s / np.sqrt(2.0)))))
assert err < 1e-3, f"double-well profile error {err:.2e}"
print(f"[OK] double-well connection: q2={het.q2:.8f} (exact {2 * np.sqrt(2) / 3:.8f}), max error {err:.1e}")

# config.py
import os

# --- Runtime-overridden paths (set by CLI) ---
CONFIG_PATH: str | None = None
OUTPUT_DIR = os.getenv("LAYERLAB_OUT", "outputs")

# Verbosity for the root logger (DEBUG / INFO / WARNING / ERROR)
LOG_LEVEL = os.getenv("LAYERLAB_LOG", "INFO").upper()

ARTIFACT_VERSION = "layerlab/1"

# ---------- Potential checks ----------
TOL_MIN = float(os.getenv("LAYERLAB_TOL_MIN", "1e-10") or "1e-10")     # W(a), |grad W(a)| at a minimum
GAP_TOL = float(os.getenv("LAYERLAB_GAP_TOL", "1e-8") or "1e-8")       # relative Hessian eigenvalue gap (H2)

# ---------- Heteroclinic solver ----------
NEWTON_TOL = float(os.getenv("LAYERLAB_NEWTON_TOL", "1e-10") or "1e-10")
EQUI_TOL = float(os.getenv("LAYERLAB_EQUI_TOL", "1e-6") or "1e-6")
EIG0_TOL = float(os.getenv("LAYERLAB_EIG0_TOL", "1e-4") or "1e-4")
SPECTRAL_FLOOR = float(os.getenv("LAYERLAB_SPECTRAL_FLOOR", "1.5e-2") or "1.5e-2")  # 1% of the double-well lambda_2 = 3/2
HET_POINTS = int(os.getenv("LAYERLAB_HET_POINTS", "4096") or "4096")
HET_L_FACTOR = float(os.getenv("LAYERLAB_HET_L_FACTOR", "20") or "20")  # L = factor / mu_min, exp(-20) < 1e-8
PRERELAX_STEPS = 200
TAIL_WINDOW = (1e-7, 1e-3)
H4_ANGLE_DEG = 5.0
TRIANGLE_RTOL = 1e-8    # a direct action within this of a detour counts as no cheaper

# ---------- Periodic grid / ansatz ----------
POINTS_PER_EPS = float(os.getenv("LAYERLAB_POINTS_PER_EPS", "24") or "24")
MIN_POINTS_PER_EPS = 16.0
N_IMAGES = int(os.getenv("LAYERLAB_N_IMAGES", "2") or "2")
DENSE_EIG_LIMIT = 4096

# ---------- Tracking ----------
PROJ_TOL = float(os.getenv("LAYERLAB_PROJ_TOL", "1e-9") or "1e-9")
NEIGHBORHOOD_FRAC = 0.25   # max |w| as a fraction of the closest pair of consecutive minima

# ---------- PDE ----------
SOLVER_SLACK = float(os.getenv("LAYERLAB_SOLVER_SLACK", "1e-12") or "1e-12")
C_DT = float(os.getenv("LAYERLAB_C_DT", "10") or "10")
REACTION_DT_CAP = 0.1
DT_MIN = 1e-12

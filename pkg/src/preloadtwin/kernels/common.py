"""Constants shared by the numba and numpy kernel backends.

Geometry packs are flat float64 arrays so both backends (and @njit code)
index them identically. Particle packs are (n, 9) float64 arrays in
priors.PARAM_NAMES order with cv/ch already converted to m2/week.
"""

# Below this time factor the vertical-degree series is evaluated through its
# early-time closed form 2*sqrt(Tv/pi); the two expressions agree to well
# below double precision there while the exponential series would need
# O(1/sqrt(Tv)) terms.
SMALL_TV = 2.5e-3

# Hard cap on series terms (reached only for pathological tolerances).
MAX_SERIES_TERMS = 100_000

# Bisection iterations for the consolidation-clock shift. 52 halvings of a
# [0, t_add] bracket put the solution far below any stated tolerance.
BISECT_ITERS = 52

# Geometry pack layout.
G_CLAY = 0        # clay thickness [m]
G_CRUST = 1       # crust thickness [m]
G_GW = 2          # groundwater depth below surface [m]
G_GAMMA_W = 3     # unit weight of water [kN/m3]
G_NLAYERS = 4     # number of clay sublayers (stored as float)
G_LAYER_THK = 5   # sublayer thickness [m]
G_DRAIN = 6       # vertical drainage path [m]
G_DE2 = 7         # squared equivalent drain-influence diameter [m2]
G_MU = 8          # Hansbo drain-geometry factor [-]
G_EMB_H = 9       # embankment height [m]
G_SERIES_TOL = 10 # vertical-degree series truncation threshold
GEOM_SIZE = 11

# Particle pack columns (priors.PARAM_NAMES order, cv/ch in m2/week).
P_SIGMA_L = 0
P_SIGMA_C = 1
P_GAMMA_CL = 2
P_GAMMA_EMB = 3
P_M0 = 4
P_ML = 5
P_WN = 6
P_CV = 7
P_CH = 8

# Rollout status codes.
ROLLOUT_OK = 0
ROLLOUT_STRESS_TRUTH = 1
ROLLOUT_STRESS_BELIEF = 2
ROLLOUT_DEGENERATE = 3

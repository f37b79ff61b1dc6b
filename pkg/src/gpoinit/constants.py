"""Numerical thresholds used across the package, kept in one place."""

import math

# projection / depth guards
EPS_DEPTH = 1e-12          # |z| below this makes pi(.) undefined
EPS_POINT_DEPTH = 1e-9     # camera-frame depth a projected point must exceed
EPS_PLANE_DIST = 1e-12     # |d| below this makes a plane-induced homography undefined
EPS_RAY_PLANE = 1e-12      # |n^T ray| below this means the ray misses the plane

# type invariants
UNIT_NORM_TOL = 1e-9
HOMOGRAPHY_MIN_DET = 1e-12
HOMOGRAPHY_FROBENIUS = math.sqrt(3.0)

# robust estimation defaults
RANSAC_THRESHOLD_PX = 3.0
RANSAC_CONFIDENCE = 0.999
RANSAC_MAX_ITERS = 2000
RANSAC_MIN_INLIERS = 8
PLANE_RANSAC_MAX_ITERS = 500
# a track is rejected when it fails the homography test in more than this
# fraction of the frame pairs it takes part in
TRACK_MAX_OUTLIER_FRACTION = 0.5

# homography decomposition
PURE_ROTATION_TOL = 1e-3   # max |H^T H - I| below which H is treated as a rotation
# share of points that must lie in front of both cameras for a candidate to count
CHEIRALITY_MIN_FRACTION = 0.95

# triangulation
MIN_RAY_ANGLE = 1e-6       # radians

# observability guard for GPO
MIN_MEDIAN_PARALLAX_PX = 0.5

# DBSCAN normal clustering
DBSCAN_EPS_DEG = 5.0
DBSCAN_MIN_PTS = 4

# residual returned in place of an undefined homography transfer
CAPPED_RESIDUAL_PX = 1e4

"""Numerical constants of the PBM augmentation module."""

# Raw diagonal outputs of the precision factor are clipped to this range before exp
DIAG_RAW_CLAMP = 7.0

# Floor added before the log transform; PBMs are powers and may be exactly zero
LOG_FLOOR = 1e-12

# Per-coordinate standard deviations below this are replaced by 1
MIN_STD = 1e-12

# Generated samples are clipped to the training range widened by this many standard deviations
TRANSFORM_MARGIN = 3.0

LOG_2PI = 1.8378770664093453

# Shortest training set that still gets a held-out validation slice
MIN_SAMPLES_FOR_VALIDATION = 4

# Seed streams
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_NOISE = 2
STREAM_DROPOUT = 3
STREAM_VALIDATION = 4
STREAM_IMPORTANCE = 5

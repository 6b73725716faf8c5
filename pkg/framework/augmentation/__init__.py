"""PBM augmentation module (CVAE-and-MDN)."""

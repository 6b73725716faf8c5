"""Shared fixtures."""

import logging

import pytest


def tiny_experiment(output_dir: str) -> dict:
    """Smallest experiment that exercises every stage in a few seconds."""
    return {
        "seed": 5,
        "output_dir": output_dir,
        "scenario": {
            "n_aps": 2,
            "n_users": 2,
            "m_y": 2,
            "m_z": 2,
            "l_paths": 2,
            "ap_positions": [[0.0, 0.0, 6.0], [30.0, 0.0, 6.0]],
            "region_centers": [[8.0, 15.0], [22.0, 15.0]],
        },
        "probing": {"beams_per_ap": 2, "n_combos": 2},
        "dataset": {"n_location_sets": 12, "train_size": 0, "train_sizes": [4], "aug_size": 5},
        "pipeline": {"classes": 2, "keep": 1},
        "augmenter": {
            "latent_dim": 2,
            "components": 2,
            "encoder_hidden": [8],
            "decoder_hidden": [8],
            "epochs": 2,
            "batch_size": 8,
        },
        "mapper": {"hidden": [8], "epochs": 2, "batch_size": 8},
        "ga": {"population": 4, "n_iterations": 1, "n_evolutions": 2},
    }


@pytest.fixture(autouse=True)
def restore_root_logging():
    """configure_logging swaps root handlers; put pytest's back afterwards."""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)

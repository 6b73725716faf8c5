"""Framework modules: augmentation, rate mapping, beam optimization, orchestration."""

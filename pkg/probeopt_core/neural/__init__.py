"""Dense-network engine with reverse-mode gradients."""

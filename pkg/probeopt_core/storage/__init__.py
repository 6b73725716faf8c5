"""Dataset, checkpoint-adjacent and report file formats."""

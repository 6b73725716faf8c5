"""Distribution and pipeline quality metrics."""

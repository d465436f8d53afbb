"""Graph containers, synthetic datasets and graph-set metrics."""

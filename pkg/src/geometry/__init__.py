"""Hyperbolic geometry: manifold maps, distributions on the ball and hyperbolic k-means."""

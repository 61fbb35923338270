"""Numerical engine: KNN graphs, network, losses, optimizer, clustering, metrics, data."""

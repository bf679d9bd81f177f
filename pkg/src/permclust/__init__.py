"""Clusters of consecutive values in Mallows and p-shifted random permutations."""

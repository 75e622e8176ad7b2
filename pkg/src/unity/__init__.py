"""Partitions of unity subordinate to the multiscale ball covers."""

"""Finite elements for nonlocal minimal graphs."""

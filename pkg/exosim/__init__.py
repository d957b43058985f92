"""Deterministic simulator of vision-controlled hand-exoskeleton firmware."""

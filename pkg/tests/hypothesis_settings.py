"""Shared Hypothesis intensity tiers for the property tests."""

from hypothesis import HealthCheck, settings

# Scheduler and debounce invariants: the core contracts
KERNEL_SETTINGS = settings(max_examples=300, deadline=None, suppress_health_check=[HealthCheck.too_slow])

STANDARD_SETTINGS = settings(max_examples=100, deadline=None)

# Whole-simulation runs are slow; a handful of seeds is enough
SLOW_SETTINGS = settings(max_examples=10, deadline=None)

QUICK_SETTINGS = settings(max_examples=25, deadline=None)

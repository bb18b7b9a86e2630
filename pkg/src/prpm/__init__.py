"""Prescriptive process monitoring under uncertainty and resource limits.

Stages: encode event-log prefixes, score them with an outcome ensemble and an
uplift model, project each case's future scores from history, rank candidates
by current or adjusted gain, and replay a test log against bounded resources.
"""

__version__ = "0.1.0"

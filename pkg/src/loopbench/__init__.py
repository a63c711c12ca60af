"""loopbench: a desk-scale intent-based networking closed loop.

Natural-language intents are compiled into a validated policy artifact,
activated conflict-free against a simulated network domain, and assured
proactively: per-intent failure risk, root-cause vs victim labeling, KPI
attribution, lead-time estimates, and ranked, verified remediation.
"""

__version__ = "0.1.0"

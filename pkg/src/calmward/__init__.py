"""calmward: physiology-driven adaptive interventions for emergency training sims."""

__version__ = "0.1.0"

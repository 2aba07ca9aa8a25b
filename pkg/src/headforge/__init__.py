"""headforge: expression-aware 3D head asset optimization with score-distillation guidance."""

__version__ = "0.1.0"

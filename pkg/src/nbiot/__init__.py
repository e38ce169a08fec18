"""Link-level simulator and calculators for the NB-IoT air interface."""

__version__ = "0.1.0"


class ConfigurationError(ValueError):
    """Raised for invalid deployment, cell or scenario parameters."""

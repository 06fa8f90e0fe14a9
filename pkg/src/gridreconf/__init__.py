"""Joint power-factor correction and feeder reconfiguration toolkit."""

__version__ = "0.1.0"

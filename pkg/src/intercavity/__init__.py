"""Two-cavity, three-qutrit virtual-photon protocol simulator."""

__version__ = "0.1.0"

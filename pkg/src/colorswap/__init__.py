"""Monte Carlo simulator for entanglement swapping between photons of
different colors, with time-resolved Bell-state measurement and active
feed-forward phase compensation."""

__version__ = "0.1.0"

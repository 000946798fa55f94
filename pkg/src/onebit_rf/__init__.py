"""Simulation and analysis of a massive MU-MIMO-OFDM uplink whose base
station samples RF directly with 1-bit ADCs.

Two engines are provided: a Monte Carlo waveform simulator
(:mod:`txchain`, :mod:`quantizer`, :mod:`rxchain`) and a closed-form
second-order model (:mod:`bussgang`). :mod:`harness` runs experiments and
writes results.
"""

__version__ = "0.1.0"

"""Discrete-event simulator for directional 60 GHz multi-hop routing.

AODV-type on-demand routing with route refinement carried on sector-sweep
frames, and backpressure routing driven by periodic HELLO messages.
"""

__version__ = "0.1.0"

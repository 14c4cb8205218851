"""Two-user random-access receiver with region-partitioned sub-decoders.

The package decodes synchronous and frame-asynchronous two-user transmissions
with threshold-constrained weighted-likelihood decoders, evaluates achievable
bounds on their generalized error performance, and checks those bounds against
simulation.
"""
__version__ = "0.1.0"

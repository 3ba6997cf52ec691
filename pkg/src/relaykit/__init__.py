"""Communications-aware multirotor relay toolkit.

Subpackages cover the multirotor plant model (:mod:`relaykit.vehicle`),
the directional-antenna link budget (:mod:`relaykit.radio`), the
capacity-surrogate reference generator (:mod:`relaykit.trajgen`), the
alignment-constrained NMPC (:mod:`relaykit.nmpc`), scenario definitions
(:mod:`relaykit.scenario`), the closed-loop episode runner
(:mod:`relaykit.sim`) and independent verification oracles
(:mod:`relaykit.oracle`).
"""

__version__ = "0.1.0"

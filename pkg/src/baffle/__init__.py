"""Aggregator-free federated learning over a simulated gas-metered ledger.

The package is organised around the protocol's moving parts:

- :mod:`baffle.params` -- chunking and serialization of flat parameter vectors
- :mod:`baffle.contract` -- the coordination contract as a deterministic state machine
- :mod:`baffle.ledger` -- totally ordered transaction log with gas and latency models
- :mod:`baffle.agent` / :mod:`baffle.fleet` -- the per-device client loop and fleet drivers
- :mod:`baffle.learning` -- taxi repositioning batch-RL case study
- :mod:`baffle.baselines` -- classical FL, local learning, random decentralized FL
- :mod:`baffle.lemma` -- closed-form and Monte-Carlo checks of the rate-equivalence result
- :mod:`baffle.experiments` -- configuration-driven experiment scenarios and reports
- :mod:`baffle.service` / :mod:`baffle.cli` -- HTTP service and thin-client CLI
"""

__version__ = "0.1.0"

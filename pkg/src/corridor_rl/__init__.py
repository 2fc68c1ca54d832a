"""Offset-based coordination of signalized corridors with reinforcement learning.

Subpackages by responsibility:
  signals     cycle/offset controller mechanics
  network     corridor graph, routes, detector layout
  scenarios   scenario documents, demand profiles, schedules, perturbations
  simulate    1 Hz mesoscopic point-queue traffic model + detector emulation
  env         learning environment (observations, rewards, action cadence)
  nets        plain-numpy policy/value networks with manual gradients
  ppo         clipped-surrogate policy optimization and training loop
  bruteforce  exhaustive offset-grid search for small corridors
  metrics     delay/throughput reporting
  cli         command-line front end
"""

__version__ = "0.1.0"

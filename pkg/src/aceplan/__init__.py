"""aceplan: active-exploration MPC in a learned latent space.

A sample-based trajectory optimizer (colored-noise CEM with shrinking
populations and elite reuse) plans through a learned GRU latent dynamics
model and scores rollouts with a novelty-aware terminal value function
learned off-policy from prioritized replay. Oracle modules verify the
numerics end to end on exactly solvable tabular problems.
"""

__version__ = "0.1.0"

"""Simulations of neural-network models: associative memory, stochastic optimisation,
layered and recurrent networks trained by backpropagation, unsupervised and
reinforcement learning, and radial-basis-function networks."""

__version__ = "0.1.0"

__all__ = [
    "numerics", "hopfield", "meanfield", "anneal", "feedforward",
    "recurrent", "unsupervised", "rbf", "reinforce", "harness",
]

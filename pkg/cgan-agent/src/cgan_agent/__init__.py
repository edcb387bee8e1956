"""Conditional WGAN-GP world agent for the lobforge simulator.

Talks to the simulator exclusively over its published surfaces: the
vector-form dataset file for training data, the model JSON for scaler
bounds and the interarrival gamma, the step protocol for unrolled
training rollouts, and the agent wire protocol for serving.
"""

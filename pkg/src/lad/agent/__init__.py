"""Navigation agent: topological map, batched model, rollouts."""

"""Synthetic house environment: world tables, houses, planner, episodes, datasets."""

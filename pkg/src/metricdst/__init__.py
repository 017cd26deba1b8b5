"""Diversity-guided self-training with metric learning."""

"""Contrastive feature learning for wayside wheel fault detection."""

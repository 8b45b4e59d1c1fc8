"""Adversarial active learning with a linear SVM learner and a boundary-projection attacker."""

__version__ = "0.1.0"

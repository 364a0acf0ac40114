"""Anticipatory collision avoidance by subgradient descent in control space."""

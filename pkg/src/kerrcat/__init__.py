"""Kerr-tunable SNAIL resonator simulator."""

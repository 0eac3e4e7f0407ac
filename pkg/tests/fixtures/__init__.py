"""Synthetic packets, logs and traces for the testbed tests."""

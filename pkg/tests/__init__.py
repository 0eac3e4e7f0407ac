"""Test package for the DeepRacing testbed."""

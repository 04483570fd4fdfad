"""Test suite for tabattention-lab."""

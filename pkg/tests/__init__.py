"""Test suite for the FedDistr simulator."""

"""Permissioned PBFT ledger for IoT sensor data with intrusion detection at the gateways."""

__version__ = "0.1.0"

"""Forensic analysis toolkit for custom multirotor UAV evidence."""

__version__ = "0.1.0"

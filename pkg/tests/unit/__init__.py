"""Unit tests for the uav_wteg package."""

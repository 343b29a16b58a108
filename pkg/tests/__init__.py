"""
Test Package for MCP Wasserstein Lab

This package contains the test suite for the Wasserstein Lab. Unit tests call the
library modules directly; integration tests drive the command-line interface and
the MCP tool functions end to end.

Test Structure:
- unit/: Per-module tests for estimators, clustering, the network engine, GAN losses,
  experiments and persistence
- integration/: CLI and MCP tool tests, plus the slow acceptance runs
"""

# Test package for mcp-wasserstein-lab

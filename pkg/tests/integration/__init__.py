"""
Integration Tests for MCP Wasserstein Lab

These tests exercise the complete surfaces of the lab:
- The command-line interface: output files, exit codes, config overlays and replay
- The MCP tools: JSON payloads and "Error: ..." strings for bad input
- Slow acceptance runs comparing every estimator against its oracle

Test files:
- conftest.py: Pytest fixtures and test configuration
- test_cli.py: Tests for the wasserstein-lab command
- test_server_tools.py: Tests for the MCP tool functions
- test_acceptance.py: Minute-scale runs, selected with `-m slow`

All tests write to temporary directories; no network access is needed.
"""

# Integration tests for mcp-wasserstein-lab

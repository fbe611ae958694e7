"""trustexec tests."""

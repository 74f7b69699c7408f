def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale training checks (deselect with '-m \"not slow\"')")

def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: heavyweight oracle comparisons (minutes, not seconds)"
    )

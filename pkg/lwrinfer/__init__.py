# Makes the lwrinfer package importable in tests and scripts.

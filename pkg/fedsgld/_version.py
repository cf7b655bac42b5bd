# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Holder of the FedSGLD version number."""

# these two will be exported at `fedsgld` module level by __init__.py; also VERSION will
# be parsed by setup.py without needing to import the module
VERSION = (0, 1, 0)
__version__ = '.'.join([str(x) for x in VERSION])

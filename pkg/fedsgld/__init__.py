# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Expose the version information at module level, as is standard."""

from fedsgld._version import __version__, VERSION  # noqa

# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Init file to allow execution of FedSGLD as a module."""

import sys

from fedsgld import main

sys.exit(main.main())

"""``python -m cauchy_mann``."""
import sys

from .cli import main

sys.exit(main())

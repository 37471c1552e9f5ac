import sys

from qsspi.cli import main

sys.exit(main())

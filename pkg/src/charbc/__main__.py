import sys

from charbc.cli import main

sys.exit(main())

import sys

from aeptools.cli import main

sys.exit(main())

import sys

from dbnids.cli import main

sys.exit(main())

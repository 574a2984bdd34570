import sys

from eerscale.cli import main

sys.exit(main())

import sys

from ramkit.cli import main

sys.exit(main())

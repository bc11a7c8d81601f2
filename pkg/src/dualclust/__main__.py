import sys

from dualclust.cli import main

sys.exit(main())

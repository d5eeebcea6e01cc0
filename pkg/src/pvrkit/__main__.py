import sys

from pvrkit.cli import main

sys.exit(main())

import sys

from sketchopt.harness.cli import main

sys.exit(main())

import sys

from taxcal.cli import main

sys.exit(main())

import sys

from symred.cli import main

sys.exit(main())

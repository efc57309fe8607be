import sys

from lamai.cli import main

sys.exit(main())

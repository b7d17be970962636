import sys

from pdiqt.cli import main

sys.exit(main())

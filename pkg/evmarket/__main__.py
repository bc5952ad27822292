import sys

from evmarket.cli import main

sys.exit(main())

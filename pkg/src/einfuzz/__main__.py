import sys

from einfuzz.cli import main

sys.exit(main())

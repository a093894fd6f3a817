import sys

from trimsketch.cli import main

sys.exit(main())

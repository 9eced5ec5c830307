import sys

from divers.cli import main

sys.exit(main())

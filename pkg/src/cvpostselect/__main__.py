import sys

from cvpostselect.cli import main

sys.exit(main())

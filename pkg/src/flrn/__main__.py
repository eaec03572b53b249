import sys

from flrn.cli import main

sys.exit(main())

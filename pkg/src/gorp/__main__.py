import sys

from gorp.cli import main

sys.exit(main())

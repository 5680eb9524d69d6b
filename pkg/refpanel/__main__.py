import sys

from refpanel.cli import main

sys.exit(main())

import sys

from loadcast.cli import main

sys.exit(main())

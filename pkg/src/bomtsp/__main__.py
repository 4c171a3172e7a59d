import sys

from bomtsp.cli import main

sys.exit(main())

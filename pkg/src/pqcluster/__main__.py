import sys

from pqcluster.cli import main

sys.exit(main())

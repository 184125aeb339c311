import sys

from pocan.main import main

sys.exit(main())

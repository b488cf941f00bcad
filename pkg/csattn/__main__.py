import sys

from csattn.cli import main

sys.exit(main())

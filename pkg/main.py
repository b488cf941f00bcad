# main.py
import sys

from csattn.cli import main


if __name__ == "__main__":
    sys.exit(main())

import sys
import warnings

from random_chemostat.cli import main

warnings.filterwarnings('ignore', category=RuntimeWarning)

if __name__ == '__main__':
    sys.exit(main())

import sys

from skidsteer.cli import main

sys.exit(main())

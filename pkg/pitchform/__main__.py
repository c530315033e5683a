import sys

from pitchform.cli import main

sys.exit(main())

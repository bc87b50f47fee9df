import sys

from cascadeopt.cli import main

sys.exit(main())

from sgmod.cli import main
import sys

sys.exit(main())

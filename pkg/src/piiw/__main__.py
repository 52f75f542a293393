from piiw.cli import main
import sys

sys.exit(main())

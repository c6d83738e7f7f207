import sys

from lagflow.main import main

sys.exit(main())

import sys

from diot.main import main

sys.exit(main())

import sys

from probeopt_core.main_service.cli import main

if __name__ == "__main__":
    sys.exit(main())

import sys

from pose_lifters.cli import main


if __name__ == "__main__":
    sys.exit(main())
